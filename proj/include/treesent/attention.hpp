#pragma once

#include <span>
#include <vector>

#include "json.hpp"

#include "treesent/encoder.hpp"
#include "treesent/graph.hpp"
#include "treesent/model.hpp"
#include "treesent/tree.hpp"

namespace treesent {

/// Normalized scores exp(w2 . tanh(W1 [h_i; h_j] + b1) + b2) over the
/// candidates, returned as an n x 1 column that sums to one.
Value attention_scores(Tape& tape, std::span<const Value> candidates, Value target,
                       AttentionParams& p);

/// sum_i weights[i] * candidates[i]
Value attention_vector(Tape& tape, std::span<const Value> candidates, Value weights);

/// Nodes attended over when classifying `node`. Leaves have none.
std::vector<NodeId> attention_candidates(const ParseTree& tree, NodeId node, CandidateSet set);

struct Classification {
  Value logits;
  // Applied mode; leaves in attention modes fall back to hidden.
  ClassifierMode mode = ClassifierMode::hidden;
  std::vector<NodeId> candidates;
  Value weights;  // empty when no attention was computed
};

Classification classify(Tape& tape, NodeId node, const ParseTree& tree,
                        const EncodedTree& encoded, Model& model);

struct AttentionWeight {
  Span node_span;
  double weight = 0.0;
};

struct Prediction {
  Span node_span;
  std::vector<double> distribution;
  int argmax = 0;
  std::vector<AttentionWeight> attention;
};

Vector softmax(const Vector& logits);

Prediction make_prediction(const Classification& c, const ParseTree& tree, NodeId node);

nlohmann::json to_json(const Prediction& p);

}  // namespace treesent
