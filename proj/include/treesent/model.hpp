#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "treesent/embed.hpp"
#include "treesent/graph.hpp"

namespace treesent {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EncoderKind { rvnn, treelstm };
// hidden: softmax over h_j. attention_only: softmax over the attention
// vector a_j alone. concat: softmax over [a_j; h_j].
enum class ClassifierMode { hidden, attention_only, concat };
// Nodes the attention sum ranges over for a target node.
enum class CandidateSet { descendants, children };

std::string to_string(EncoderKind kind);
std::string to_string(ClassifierMode mode);
std::string to_string(CandidateSet set);
EncoderKind parse_encoder_kind(std::string_view name);
ClassifierMode parse_classifier_mode(std::string_view name);
CandidateSet parse_candidate_set(std::string_view name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::treelstm;
  ClassifierMode classifier = ClassifierMode::concat;
  CandidateSet candidates = CandidateSet::descendants;
  int word_dim = 300;
  int hidden_dim = 200;
  // 0 means "same as hidden_dim".
  int attention_dim = 0;
  int num_classes = 5;
  double forget_bias = 1.0;

  bool use_attention() const { return classifier != ClassifierMode::hidden; }
  int effective_attention_dim() const { return attention_dim > 0 ? attention_dim : hidden_dim; }
  void validate() const;
};

/// Binary Tree-LSTM weights. Internal nodes see [h_l; h_r]; the forget gate
/// of each child reads only the opposite child's hidden state. Leaves use an
/// input-only cell over the word vector.
struct TreeLstmParams {
  Parameter leaf_input_w, leaf_input_b;
  Parameter leaf_output_w, leaf_output_b;
  Parameter leaf_update_w, leaf_update_b;
  Parameter input_w, input_b;                // d x 2d
  Parameter left_forget_w, left_forget_b;    // d x d, applied to h_r
  Parameter right_forget_w, right_forget_b;  // d x d, applied to h_l
  Parameter output_w, output_b;              // d x 2d
  Parameter update_w, update_b;              // d x 2d

  static TreeLstmParams create(int word_dim, int hidden_dim, double forget_bias,
                               std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

struct RvnnParams {
  Parameter leaf_w, leaf_b;       // d x d_word
  Parameter compose_w, compose_b;  // d x 2d

  static RvnnParams create(int word_dim, int hidden_dim, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

struct AttentionParams {
  Parameter hidden_w, hidden_b;  // d_a x 2d over [h_i; h_j]
  Parameter score_w, score_b;    // 1 x d_a, 1 x 1

  static AttentionParams create(int hidden_dim, int attention_dim, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

struct ClassifierParams {
  Parameter hidden_w, hidden_b;  // d_l x d
  // d_l x 2d in concat mode, d_l x d in attention_only mode.
  std::optional<Parameter> attention_w, attention_b;

  static ClassifierParams create(const ModelConfig& config, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Every trainable tensor plus the vocabulary that indexes the embedding
/// table. Copies are deep.
class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab, Matrix embeddings, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  Parameter& embeddings() { return embeddings_; }
  const Parameter& embeddings() const { return embeddings_; }
  TreeLstmParams& lstm();
  RvnnParams& rvnn();
  AttentionParams& attention();
  ClassifierParams& classifier() { return classifier_; }

  // Embedding row for `token` (UNK when unseen) recorded on `tape`.
  Value word(Tape& tape, std::string_view token);

  // Fixed declaration order: embeddings, encoder, attention, classifier.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t num_scalars() const;
  double squared_norm(bool include_embeddings = true) const;

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
  void zero_grad();

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  Parameter embeddings_;
  std::optional<TreeLstmParams> lstm_;
  std::optional<RvnnParams> rvnn_;
  std::optional<AttentionParams> attention_;
  ClassifierParams classifier_;
};

}  // namespace treesent
