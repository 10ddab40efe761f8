#include "treesent/model.hpp"

#include <cmath>

namespace treesent {

namespace {

Parameter uniform_matrix(std::string name, int rows, int cols, double bound,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return Parameter(std::move(name), std::move(m));
}

Parameter bias(std::string name, int rows, double value = 0.0) {
  return Parameter(std::move(name), Matrix::Constant(rows, 1, value));
}

double init_bound(int hidden_dim) { return 1.0 / std::sqrt(static_cast<double>(hidden_dim)); }

}  // namespace

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::rvnn ? "rvnn" : "treelstm";
}

std::string to_string(ClassifierMode mode) {
  switch (mode) {
    case ClassifierMode::hidden:
      return "hidden";
    case ClassifierMode::attention_only:
      return "attention_only";
    case ClassifierMode::concat:
      return "concat";
  }
  return "?";
}

std::string to_string(CandidateSet set) {
  return set == CandidateSet::descendants ? "descendants" : "children";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "rvnn") return EncoderKind::rvnn;
  if (name == "treelstm") return EncoderKind::treelstm;
  throw ModelError("unknown encoder '" + std::string(name) + "'");
}

ClassifierMode parse_classifier_mode(std::string_view name) {
  if (name == "hidden") return ClassifierMode::hidden;
  if (name == "attention_only") return ClassifierMode::attention_only;
  if (name == "concat") return ClassifierMode::concat;
  throw ModelError("unknown classifier mode '" + std::string(name) + "'");
}

CandidateSet parse_candidate_set(std::string_view name) {
  if (name == "descendants") return CandidateSet::descendants;
  if (name == "children") return CandidateSet::children;
  throw ModelError("unknown attention candidate set '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (word_dim <= 0) throw ModelError("word_dim must be positive");
  if (hidden_dim <= 0) throw ModelError("hidden_dim must be positive");
  if (attention_dim < 0) throw ModelError("attention_dim must be non-negative");
  if (num_classes < 2) throw ModelError("num_classes must be at least 2");
}

TreeLstmParams TreeLstmParams::create(int dw, int d, double forget_bias, std::mt19937_64& rng) {
  const double a = init_bound(d);
  return TreeLstmParams{
      uniform_matrix("lstm.leaf_input_w", d, dw, a, rng),    bias("lstm.leaf_input_b", d),
      uniform_matrix("lstm.leaf_output_w", d, dw, a, rng),   bias("lstm.leaf_output_b", d),
      uniform_matrix("lstm.leaf_update_w", d, dw, a, rng),   bias("lstm.leaf_update_b", d),
      uniform_matrix("lstm.input_w", d, 2 * d, a, rng),      bias("lstm.input_b", d),
      uniform_matrix("lstm.left_forget_w", d, d, a, rng),    bias("lstm.left_forget_b", d, forget_bias),
      uniform_matrix("lstm.right_forget_w", d, d, a, rng),   bias("lstm.right_forget_b", d, forget_bias),
      uniform_matrix("lstm.output_w", d, 2 * d, a, rng),     bias("lstm.output_b", d),
      uniform_matrix("lstm.update_w", d, 2 * d, a, rng),     bias("lstm.update_b", d),
  };
}

void TreeLstmParams::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&leaf_input_w, &leaf_input_b, &leaf_output_w, &leaf_output_b,
                       &leaf_update_w, &leaf_update_b, &input_w, &input_b, &left_forget_w,
                       &left_forget_b, &right_forget_w, &right_forget_b, &output_w, &output_b,
                       &update_w, &update_b})
    out.push_back(p);
}

RvnnParams RvnnParams::create(int dw, int d, std::mt19937_64& rng) {
  const double a = init_bound(d);
  return RvnnParams{
      uniform_matrix("rvnn.leaf_w", d, dw, a, rng),
      bias("rvnn.leaf_b", d),
      uniform_matrix("rvnn.compose_w", d, 2 * d, a, rng),
      bias("rvnn.compose_b", d),
  };
}

void RvnnParams::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&leaf_w, &leaf_b, &compose_w, &compose_b}) out.push_back(p);
}

AttentionParams AttentionParams::create(int d, int da, std::mt19937_64& rng) {
  const double a = init_bound(d);
  return AttentionParams{
      uniform_matrix("attention.hidden_w", da, 2 * d, a, rng),
      bias("attention.hidden_b", da),
      uniform_matrix("attention.score_w", 1, da, a, rng),
      bias("attention.score_b", 1),
  };
}

void AttentionParams::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&hidden_w, &hidden_b, &score_w, &score_b}) out.push_back(p);
}

ClassifierParams ClassifierParams::create(const ModelConfig& config, std::mt19937_64& rng) {
  const int d = config.hidden_dim;
  const int dl = config.num_classes;
  const double a = init_bound(d);
  ClassifierParams p{uniform_matrix("classifier.hidden_w", dl, d, a, rng),
                     bias("classifier.hidden_b", dl), std::nullopt, std::nullopt};
  if (config.use_attention()) {
    const int in = config.classifier == ClassifierMode::concat ? 2 * d : d;
    p.attention_w = uniform_matrix("classifier.attention_w", dl, in, a, rng);
    p.attention_b = bias("classifier.attention_b", dl);
  }
  return p;
}

void ClassifierParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&hidden_w);
  out.push_back(&hidden_b);
  if (attention_w) {
    out.push_back(&*attention_w);
    out.push_back(&*attention_b);
  }
}

Model::Model(ModelConfig config, Vocabulary vocab, Matrix embeddings, std::uint64_t seed)
    : config_(config),
      vocab_(std::move(vocab)),
      embeddings_("embeddings", std::move(embeddings), /*row_sparse=*/true),
      classifier_{Parameter("", Matrix()), Parameter("", Matrix()), std::nullopt, std::nullopt} {
  config_.validate();
  if (embeddings_.value.rows() != vocab_.size())
    throw ModelError("embedding table has " + std::to_string(embeddings_.value.rows()) +
                     " rows for a vocabulary of " + std::to_string(vocab_.size()));
  if (embeddings_.value.cols() != config_.word_dim)
    throw ModelError("embedding width " + std::to_string(embeddings_.value.cols()) +
                     " does not match word_dim " + std::to_string(config_.word_dim));
  std::mt19937_64 rng(seed);
  if (config_.encoder == EncoderKind::treelstm)
    lstm_ = TreeLstmParams::create(config_.word_dim, config_.hidden_dim, config_.forget_bias, rng);
  else
    rvnn_ = RvnnParams::create(config_.word_dim, config_.hidden_dim, rng);
  if (config_.use_attention())
    attention_ = AttentionParams::create(config_.hidden_dim, config_.effective_attention_dim(), rng);
  classifier_ = ClassifierParams::create(config_, rng);
}

TreeLstmParams& Model::lstm() {
  if (!lstm_) throw ModelError("model has no Tree-LSTM encoder");
  return *lstm_;
}

RvnnParams& Model::rvnn() {
  if (!rvnn_) throw ModelError("model has no RvNN encoder");
  return *rvnn_;
}

AttentionParams& Model::attention() {
  if (!attention_) throw ModelError("model has no attention parameters");
  return *attention_;
}

Value Model::word(Tape& tape, std::string_view token) {
  return tape.lookup(embeddings_, vocab_.index(token));
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out{&embeddings_};
  if (lstm_) lstm_->collect(out);
  if (rvnn_) rvnn_->collect(out);
  if (attention_) attention_->collect(out);
  classifier_.collect(out);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto all = const_cast<Model*>(this)->parameters();
  return {all.begin(), all.end()};
}

std::size_t Model::num_scalars() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

double Model::squared_norm(bool include_embeddings) const {
  double total = 0.0;
  for (const Parameter* p : parameters()) {
    if (!include_embeddings && p == &embeddings_) continue;
    total += p->value.squaredNorm();
  }
  return total;
}

std::vector<Matrix> Model::snapshot() const {
  std::vector<Matrix> out;
  for (const Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void Model::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ModelError("snapshot tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].rows() != params[i]->value.rows() || values[i].cols() != params[i]->value.cols())
      throw ModelError("snapshot shape mismatch for " + params[i]->name);
    params[i]->value = values[i];
  }
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace treesent
