#include "treesent/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

namespace treesent {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adagrad ? "adagrad" : "adadelta";
}

std::string to_string(ClipMode mode) {
  return mode == ClipMode::global_norm ? "global_norm" : "per_element";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adagrad") return OptimizerKind::adagrad;
  if (name == "adadelta") return OptimizerKind::adadelta;
  throw TrainError("unknown optimizer '" + std::string(name) + "'");
}

ClipMode parse_clip_mode(std::string_view name) {
  if (name == "global_norm") return ClipMode::global_norm;
  if (name == "per_element") return ClipMode::per_element;
  throw TrainError("unknown clip mode '" + std::string(name) + "'");
}

void TrainingConfig::validate() const {
  model.validate();
  if (weight_decay < 0.0) throw TrainError("weight_decay must be >= 0");
  if (!(clip > 0.0)) throw TrainError("clip threshold must be > 0");
  if (epochs < 0) throw TrainError("epochs must be >= 0");
  if (eval_every <= 0) throw TrainError("eval_every must be positive");
  if (optimizer == OptimizerKind::adagrad && !(learning_rate > 0.0))
    throw TrainError("learning rate must be > 0");
  if (optimizer == OptimizerKind::adadelta && !(adadelta_rho > 0.0 && adadelta_rho < 1.0))
    throw TrainError("adadelta rho must lie in (0, 1)");
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {
      {"encoder", to_string(c.model.encoder)},
      {"classifier", to_string(c.model.classifier)},
      {"candidates", to_string(c.model.candidates)},
      {"word_dim", c.model.word_dim},
      {"hidden_dim", c.model.hidden_dim},
      {"attention_dim", c.model.effective_attention_dim()},
      {"num_classes", c.model.num_classes},
      {"forget_bias", c.model.forget_bias},
      {"use_dictionary", c.use_dictionary},
      {"optimizer", to_string(c.optimizer)},
      {"learning_rate", c.learning_rate},
      {"adagrad_epsilon", c.adagrad_epsilon},
      {"adadelta_rho", c.adadelta_rho},
      {"adadelta_epsilon", c.adadelta_epsilon},
      {"weight_decay", c.weight_decay},
      {"decay_embeddings", c.decay_embeddings},
      {"clip", c.clip},
      {"clip_mode", to_string(c.clip_mode)},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
  };
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  try {
    c.model.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    c.model.classifier = parse_classifier_mode(j.at("classifier").get<std::string>());
    c.model.candidates = parse_candidate_set(j.at("candidates").get<std::string>());
    c.model.word_dim = j.at("word_dim").get<int>();
    c.model.hidden_dim = j.at("hidden_dim").get<int>();
    c.model.attention_dim = j.at("attention_dim").get<int>();
    c.model.num_classes = j.at("num_classes").get<int>();
    c.model.forget_bias = j.at("forget_bias").get<double>();
    c.use_dictionary = j.at("use_dictionary").get<bool>();
    c.optimizer = parse_optimizer_kind(j.at("optimizer").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.adagrad_epsilon = j.at("adagrad_epsilon").get<double>();
    c.adadelta_rho = j.at("adadelta_rho").get<double>();
    c.adadelta_epsilon = j.at("adadelta_epsilon").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.decay_embeddings = j.at("decay_embeddings").get<bool>();
    c.clip = j.at("clip").get<double>();
    c.clip_mode = parse_clip_mode(j.at("clip_mode").get<std::string>());
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("invalid training config: ") + e.what());
  }
  return c;
}

SentenceLoss sentence_loss(Tape& tape, const ParseTree& tree, Model& model) {
  std::vector<NodeId> nodes = collect_loss_nodes(tree);
  for (NodeId id : nodes)
    if (*tree.node(id).label >= model.config().num_classes)
      throw TrainError("label " + std::to_string(*tree.node(id).label) + " exceeds model classes");
  EncodedTree encoded = encode_tree(tape, tree, model);
  SentenceLoss out;
  for (NodeId id : nodes) {
    Classification c = classify(tape, id, tree, encoded, model);
    Value ce = tape.softmax_cross_entropy(c.logits, *tree.node(id).label);
    out.loss = out.loss.valid() ? tape.add(out.loss, ce) : ce;
  }
  out.loss_nodes = nodes.size();
  return out;
}

Value l2_penalty(Tape& tape, Model& model, double weight_decay, bool include_embeddings) {
  std::vector<Parameter*> params;
  for (Parameter* p : model.parameters())
    if (include_embeddings || p != &model.embeddings()) params.push_back(p);
  return tape.scale(tape.squared_l2(params), 0.5 * weight_decay);
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

ClipResult clip_gradients(std::span<Parameter* const> params, double threshold, ClipMode mode) {
  ClipResult r;
  r.norm_before = global_grad_norm(params);
  if (mode == ClipMode::per_element) {
    for (Parameter* p : params) {
      if ((p->grad.array().abs() > threshold).any()) r.clipped = true;
      p->grad = p->grad.cwiseMax(-threshold).cwiseMin(threshold);
    }
    return r;
  }
  if (r.norm_before > threshold) {
    const double factor = threshold / r.norm_before;
    for (Parameter* p : params) p->grad *= factor;
    r.clipped = true;
  }
  return r;
}

void Optimizer::step(std::span<Parameter* const> params, double weight_decay,
                     const Parameter* skip_decay) {
  if (first_.size() != params.size()) {
    first_.clear();
    second_.clear();
    for (const Parameter* p : params) {
      first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const double decay = (&p == skip_decay) ? 0.0 : weight_decay;
    if (p.row_sparse) {
      // Rows of a column-major matrix are strided; update contiguous copies.
      for (Eigen::Index r : p.touched_rows()) {
        Matrix theta = p.value.row(r);
        Matrix s1 = first_[k].row(r);
        Matrix s2 = second_[k].row(r);
        Matrix g = p.grad.row(r) + decay * theta;
        update(theta, g, s1, s2);
        p.value.row(r) = theta;
        first_[k].row(r) = s1;
        second_[k].row(r) = s2;
      }
    } else {
      Matrix g = p.grad + decay * p.value;
      update(p.value, g, first_[k], second_[k]);
    }
  }
}

void AdaGrad::update(Matrix& theta, const Matrix& g, Matrix& sum_sq, Matrix&) {
  sum_sq.array() += g.array().square();
  theta.array() -= lr_ * g.array() / (sum_sq.array().sqrt() + eps_);
}

void AdaDelta::update(Matrix& theta, const Matrix& g, Matrix& avg_sq_grad,
                      Matrix& avg_sq_update) {
  avg_sq_grad.array() = rho_ * avg_sq_grad.array() + (1.0 - rho_) * g.array().square();
  Matrix delta = (-((avg_sq_update.array() + eps_).sqrt() / (avg_sq_grad.array() + eps_).sqrt()) *
                  g.array())
                     .matrix();
  avg_sq_update.array() = rho_ * avg_sq_update.array() + (1.0 - rho_) * delta.array().square();
  theta += delta;
}

std::unique_ptr<Optimizer> make_optimizer(const TrainingConfig& config) {
  if (config.optimizer == OptimizerKind::adagrad)
    return std::make_unique<AdaGrad>(config.learning_rate, config.adagrad_epsilon);
  return std::make_unique<AdaDelta>(config.adadelta_rho, config.adadelta_epsilon);
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {
      {"epoch", r.epoch},
      {"train_loss", r.objective},
      {"cross_entropy", r.cross_entropy},
      {"l2", r.l2},
      {"labeled_nodes", r.labeled_nodes},
      {"clipped_steps", r.clipped_steps},
  };
  j["dev_acc"] = r.dev_accuracy ? nlohmann::json(*r.dev_accuracy) : nlohmann::json(nullptr);
  return j;
}

EpochRecord measure_objective(std::span<const ParseTree> trees, Model& model,
                              const TrainingConfig& config) {
  if (trees.empty()) throw TrainError("cannot measure the objective of an empty dataset");
  EpochRecord r;
  double ce = 0.0;
  for (const auto& tree : trees) {
    Tape tape;
    SentenceLoss sl = sentence_loss(tape, tree, model);
    ce += sl.loss.scalar();
    r.labeled_nodes += sl.loss_nodes;
  }
  r.cross_entropy = ce / static_cast<double>(trees.size());
  r.l2 = 0.5 * config.weight_decay * model.squared_norm(config.decay_embeddings);
  r.objective = r.cross_entropy + r.l2;
  return r;
}

std::vector<ParseTree> prepare_training_trees(std::span<const ParseTree> trees,
                                              const PolarDictionary* dict,
                                              const TrainingConfig& config) {
  std::vector<ParseTree> out;
  out.reserve(trees.size());
  for (const auto& t : trees)
    out.push_back(config.use_dictionary && dict ? annotate(t, *dict) : t);
  return out;
}

TrainResult train(Model& model, std::span<const ParseTree> train_trees,
                  std::span<const ParseTree> dev, const TrainingConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_trees.empty()) throw TrainError("training set is empty");
  std::vector<Parameter*> params = model.parameters();
  const Parameter* skip_decay = config.decay_embeddings ? nullptr : &model.embeddings();
  std::unique_ptr<Optimizer> optimizer = make_optimizer(config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_trees.size());
  std::iota(order.begin(), order.end(), 0);
  const int threads = resolve_threads(config.threads);

  TrainResult result;
  std::optional<std::vector<Matrix>> best;
  model.zero_grad();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double ce = 0.0;
    for (std::size_t idx : order) {
      Tape tape;
      SentenceLoss sl = sentence_loss(tape, train_trees[idx], model);
      ce += sl.loss.scalar();
      rec.labeled_nodes += sl.loss_nodes;
      tape.backward(sl.loss);
      if (clip_gradients(params, config.clip, config.clip_mode).clipped) ++rec.clipped_steps;
      optimizer->step(params, config.weight_decay, skip_decay);
      model.zero_grad();
    }
    rec.cross_entropy = ce / static_cast<double>(train_trees.size());
    rec.l2 = 0.5 * config.weight_decay * model.squared_norm(config.decay_embeddings);
    rec.objective = rec.cross_entropy + rec.l2;
    const bool eval_due = epoch % config.eval_every == 0 || epoch == config.epochs;
    if (!dev.empty() && eval_due) {
      rec.dev_accuracy = evaluate(dev, model, threads);
      if (!result.best_dev_accuracy || *rec.dev_accuracy > *result.best_dev_accuracy) {
        result.best_dev_accuracy = rec.dev_accuracy;
        result.best_epoch = epoch;
        best = model.snapshot();
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (best) {
    model.restore(*best);
  } else {
    result.best_epoch = config.epochs;
  }
  return result;
}

Prediction predict(const ParseTree& tree, Model& model) {
  Tape tape;
  EncodedTree encoded = encode_tree(tape, tree, model);
  Classification c = classify(tape, tree.root(), tree, encoded, model);
  return make_prediction(c, tree, tree.root());
}

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("TREESENT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

std::vector<Prediction> predict_all(std::span<const ParseTree> trees, Model& model, int threads) {
  std::vector<Prediction> out(trees.size());
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), trees.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < trees.size(); ++i) out[i] = predict(trees[i], model);
    return out;
  }
  // Forward passes only read parameters; every worker owns its tapes.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < trees.size(); i += workers) out[i] = predict(trees[i], model);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double evaluate(std::span<const ParseTree> trees, Model& model, int threads) {
  if (trees.empty()) throw TrainError("cannot evaluate on an empty dataset");
  std::vector<Prediction> preds = predict_all(trees, model, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& label = trees[i].node(trees[i].root()).label;
    if (!label) throw TrainError("evaluation tree " + std::to_string(i) + " has no root label");
    if (preds[i].argmax == *label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(trees.size());
}

}  // namespace treesent
