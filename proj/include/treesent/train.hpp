#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "treesent/attention.hpp"
#include "treesent/encoder.hpp"
#include "treesent/graph.hpp"
#include "treesent/lexicon.hpp"
#include "treesent/model.hpp"
#include "treesent/tree.hpp"

namespace treesent {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { adagrad, adadelta };
enum class ClipMode { global_norm, per_element };

std::string to_string(OptimizerKind kind);
std::string to_string(ClipMode mode);
OptimizerKind parse_optimizer_kind(std::string_view name);
ClipMode parse_clip_mode(std::string_view name);

struct TrainingConfig {
  ModelConfig model;
  bool use_dictionary = true;

  OptimizerKind optimizer = OptimizerKind::adagrad;
  double learning_rate = 0.005;
  double adagrad_epsilon = 1e-8;
  double adadelta_rho = 0.95;
  double adadelta_epsilon = 1e-6;

  double weight_decay = 1e-4;
  // Whether the L2 term covers the embedding table.
  bool decay_embeddings = true;
  double clip = 5.0;
  ClipMode clip_mode = ClipMode::global_norm;

  int epochs = 10;
  std::uint64_t seed = 1;
  // Dev accuracy is computed every `eval_every` epochs and at the last one.
  int eval_every = 1;
  // 0 = hardware concurrency; TREESENT_THREADS caps it.
  int threads = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j);

struct SentenceLoss {
  Value loss;  // summed cross-entropy over loss nodes
  std::size_t loss_nodes = 0;
};

/// Cross-entropy summed over every labeled node of `tree`.
SentenceLoss sentence_loss(Tape& tape, const ParseTree& tree, Model& model);

/// (lambda / 2) * ||theta||^2 recorded on the tape.
Value l2_penalty(Tape& tape, Model& model, double weight_decay, bool include_embeddings = true);

struct ClipResult {
  double norm_before = 0.0;
  bool clipped = false;
};

double global_grad_norm(std::span<Parameter* const> params);
ClipResult clip_gradients(std::span<Parameter* const> params, double threshold,
                          ClipMode mode = ClipMode::global_norm);

/// Per-tensor adaptive optimizers. Weight decay is coupled: lambda * theta
/// is added to the gradient before the update. Row-sparse parameters only
/// update rows that received gradient.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  void step(std::span<Parameter* const> params, double weight_decay,
            const Parameter* skip_decay = nullptr);

 protected:
  // Updates `theta` in place from gradient `g`, with per-entry state slots.
  virtual void update(Matrix& theta, const Matrix& g, Matrix& s1, Matrix& s2) = 0;

 private:
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

class AdaGrad final : public Optimizer {
 public:
  explicit AdaGrad(double lr, double epsilon = 1e-8) : lr_(lr), eps_(epsilon) {}

 protected:
  void update(Matrix& theta, const Matrix& g, Matrix& sum_sq, Matrix& unused) override;

 private:
  double lr_, eps_;
};

class AdaDelta final : public Optimizer {
 public:
  explicit AdaDelta(double rho = 0.95, double epsilon = 1e-6) : rho_(rho), eps_(epsilon) {}

 protected:
  void update(Matrix& theta, const Matrix& g, Matrix& avg_sq_grad,
              Matrix& avg_sq_update) override;

 private:
  double rho_, eps_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainingConfig& config);

struct EpochRecord {
  int epoch = 0;
  // Mean per-sentence objective: cross_entropy + l2.
  double objective = 0.0;
  double cross_entropy = 0.0;
  double l2 = 0.0;
  std::size_t labeled_nodes = 0;
  std::size_t clipped_steps = 0;
  std::optional<double> dev_accuracy;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::optional<double> best_dev_accuracy;
};

/// Mean objective over `trees` at the current parameters, without updates.
EpochRecord measure_objective(std::span<const ParseTree> trees, Model& model,
                              const TrainingConfig& config);

/// Trees used for training: labels below the root come from the corpus
/// and, when enabled, from the dictionary.
std::vector<ParseTree> prepare_training_trees(std::span<const ParseTree> trees,
                                              const PolarDictionary* dict,
                                              const TrainingConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Per-sentence updates in seeded shuffled order. On return `model` holds
/// the parameters of the epoch with the best dev accuracy (earliest on
/// ties), or the final epoch when `dev` is empty.
TrainResult train(Model& model, std::span<const ParseTree> train_trees,
                  std::span<const ParseTree> dev, const TrainingConfig& config,
                  const EpochCallback& on_epoch = {});

Prediction predict(const ParseTree& tree, Model& model);
std::vector<Prediction> predict_all(std::span<const ParseTree> trees, Model& model,
                                    int threads = 0);

/// Fraction of trees whose root prediction equals the root label. Only the
/// root label is read; no dictionary is involved.
double evaluate(std::span<const ParseTree> trees, Model& model, int threads = 0);

/// Worker count: `requested` (0 = hardware), capped by TREESENT_THREADS.
int resolve_threads(int requested);

}  // namespace treesent
