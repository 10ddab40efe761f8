#include "treesent/attention.hpp"

namespace treesent {

Value attention_scores(Tape& tape, std::span<const Value> candidates, Value target,
                       AttentionParams& p) {
  if (candidates.empty()) throw ModelError("attention_scores: empty candidate set");
  Value w1 = tape.param(p.hidden_w);
  Value b1 = tape.param(p.hidden_b);
  Value w2 = tape.param(p.score_w);
  Value b2 = tape.param(p.score_b);
  std::vector<Value> scores;
  scores.reserve(candidates.size());
  for (const Value& h : candidates) {
    const Value pair[] = {h, target};
    Value hidden = tape.tanh(tape.add(tape.matvec(w1, tape.concat(pair)), b1));
    scores.push_back(tape.exp(tape.add(tape.matvec(w2, hidden), b2)));
  }
  return tape.normalize(tape.concat(scores));
}

Value attention_vector(Tape& tape, std::span<const Value> candidates, Value weights) {
  if (weights.rows() != static_cast<Eigen::Index>(candidates.size()))
    throw ModelError("attention_vector: " + std::to_string(weights.rows()) + " weights for " +
                     std::to_string(candidates.size()) + " candidates");
  return tape.weighted_sum(weights, candidates);
}

std::vector<NodeId> attention_candidates(const ParseTree& tree, NodeId node, CandidateSet set) {
  const TreeNode& n = tree.node(node);
  if (set == CandidateSet::children) return n.children;
  std::vector<NodeId> out;
  for (NodeId id = tree.subtree_begin(node); id < node; ++id) out.push_back(id);
  return out;
}

Classification classify(Tape& tape, NodeId node, const ParseTree& tree,
                        const EncodedTree& encoded, Model& model) {
  if (node < 0 || static_cast<std::size_t>(node) >= encoded.size() || !encoded.h[node].valid())
    throw ModelError("classify: node " + std::to_string(node) + " is not encoded");
  const ModelConfig& cfg = model.config();
  ClassifierParams& cp = model.classifier();
  Value h = encoded.h[node];

  Classification out;
  if (cfg.use_attention()) out.candidates = attention_candidates(tree, node, cfg.candidates);
  if (out.candidates.empty()) {
    out.mode = ClassifierMode::hidden;
    out.logits = tape.add(tape.matvec(tape.param(cp.hidden_w), h), tape.param(cp.hidden_b));
    return out;
  }

  std::vector<Value> hs;
  hs.reserve(out.candidates.size());
  for (NodeId id : out.candidates) hs.push_back(encoded.h[id]);
  out.mode = cfg.classifier;
  out.weights = attention_scores(tape, hs, h, model.attention());
  Value a = attention_vector(tape, hs, out.weights);
  Value input = a;
  if (cfg.classifier == ClassifierMode::concat) {
    const Value both[] = {a, h};
    input = tape.concat(both);
  }
  out.logits = tape.add(tape.matvec(tape.param(*cp.attention_w), input),
                        tape.param(*cp.attention_b));
  return out;
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Prediction make_prediction(const Classification& c, const ParseTree& tree, NodeId node) {
  Prediction p;
  p.node_span = tree.node(node).span;
  Vector dist = softmax(c.logits.value().col(0));
  p.distribution.assign(dist.data(), dist.data() + dist.size());
  Eigen::Index best = 0;
  dist.maxCoeff(&best);
  p.argmax = static_cast<int>(best);
  if (c.weights.valid()) {
    const Matrix& w = c.weights.value();
    for (std::size_t i = 0; i < c.candidates.size(); ++i)
      p.attention.push_back({tree.node(c.candidates[i]).span, w(static_cast<Eigen::Index>(i), 0)});
  }
  return p;
}

nlohmann::json to_json(const Prediction& p) {
  nlohmann::json attention = nlohmann::json::array();
  for (const auto& a : p.attention)
    attention.push_back({{"node_span", {a.node_span.begin, a.node_span.end}}, {"weight", a.weight}});
  return {
      {"node_span", {p.node_span.begin, p.node_span.end}},
      {"distribution", p.distribution},
      {"argmax", p.argmax},
      {"attention", std::move(attention)},
  };
}

}  // namespace treesent
