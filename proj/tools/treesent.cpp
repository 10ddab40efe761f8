// Command-line front end: train, eval, dump-attention, gradcheck.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "treesent/checkpoint.hpp"
#include "treesent/embed.hpp"
#include "treesent/gradcheck.hpp"
#include "treesent/lexicon.hpp"
#include "treesent/train.hpp"
#include "treesent/tree.hpp"

namespace fs = std::filesystem;
using namespace treesent;

namespace {

constexpr const char* kMetricsSchema = "treesent.metrics/1";
constexpr const char* kEvalSchema = "treesent.eval/1";
constexpr const char* kAttentionSchema = "treesent.attention/1";
constexpr const char* kGradCheckSchema = "treesent.gradcheck/1";

// Embedding initialisation gets its own stream so that changing the model
// shape does not perturb word vectors drawn for the same seed.
constexpr std::uint64_t kEmbeddingSeedSalt = 0x9e3779b97f4a7c15ULL;

struct TrainOptions {
  std::string train, dev, dict, embeddings, checkpoint, metrics;
  std::string labels = "fine5";
  bool sentence_only = false;
  bool no_dict = false;
  std::string mode = "treelstm", classifier = "concat", candidates = "descendants";
  std::string optimizer = "adagrad", clip_mode = "global_norm";
  TrainingConfig config;
};

struct EvalOptions {
  std::string checkpoint, test;
  int threads = 0;
};

struct DumpOptions {
  std::string checkpoint, input, output, dot;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  std::string corrupt_op;
};

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw std::runtime_error(flag + ": no such file: " + path);
}

std::vector<ParseTree> load_trees(const std::string& path, const LabelScheme& scheme) {
  auto trees = read_tree_file(path, scheme);
  if (trees.empty()) throw std::runtime_error(path + ": contains no trees");
  return trees;
}

void add_train_options(CLI::App& cmd, TrainOptions& o) {
  TrainingConfig& c = o.config;
  cmd.add_option("--train", o.train, "Training trees, one s-expression per line")->required();
  cmd.add_option("--dev", o.dev, "Development trees for model selection");
  cmd.add_option("--dict", o.dict, "Polar dictionary (surface<TAB>pos|neg)");
  cmd.add_flag("--no-dict", o.no_dict, "Ignore --dict");
  cmd.add_option("--embeddings", o.embeddings, "Pre-trained word vectors (text format)");
  cmd.add_option("--checkpoint", o.checkpoint, "Output checkpoint directory")->required();
  cmd.add_option("--metrics", o.metrics, "Metrics JSON-lines path [<checkpoint>/metrics.jsonl]");
  cmd.add_option("--labels", o.labels, "Label scheme")
      ->check(CLI::IsMember({"binary", "fine5"}))
      ->capture_default_str();
  cmd.add_flag("--sentence-only", o.sentence_only, "Drop phrase labels below the root");
  cmd.add_option("--mode", o.mode, "Encoder")
      ->check(CLI::IsMember({"rvnn", "treelstm"}))
      ->capture_default_str();
  cmd.add_option("--classifier", o.classifier, "Classifier input")
      ->check(CLI::IsMember({"hidden", "attention_only", "concat"}))
      ->capture_default_str();
  cmd.add_option("--candidates", o.candidates, "Nodes attended over")
      ->check(CLI::IsMember({"descendants", "children"}))
      ->capture_default_str();
  cmd.add_option("--optimizer", o.optimizer, "Optimizer")
      ->check(CLI::IsMember({"adagrad", "adadelta"}))
      ->capture_default_str();
  cmd.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  cmd.add_option("--lr", c.learning_rate, "AdaGrad learning rate")->capture_default_str();
  cmd.add_option("--weight-decay", c.weight_decay, "L2 coefficient lambda")->capture_default_str();
  cmd.add_option("--clip", c.clip, "Gradient clipping threshold")->capture_default_str();
  cmd.add_option("--clip-mode", o.clip_mode, "Clipping rule")
      ->check(CLI::IsMember({"global_norm", "per_element"}))
      ->capture_default_str();
  cmd.add_option("--word-dim", c.model.word_dim, "Word vector size")->capture_default_str();
  cmd.add_option("--hidden-dim", c.model.hidden_dim, "Hidden state size")->capture_default_str();
  cmd.add_option("--attn-dim", c.model.attention_dim, "Attention layer size (0 = hidden size)")
      ->capture_default_str();
  cmd.add_option("--eval-every", c.eval_every, "Dev evaluation interval in epochs")
      ->capture_default_str();
  cmd.add_option("--threads", c.threads, "Evaluation threads (0 = all cores)")
      ->capture_default_str();
}

int cmd_train(TrainOptions& o) {
  require_file(o.train, "--train");
  if (!o.dev.empty()) require_file(o.dev, "--dev");
  if (!o.dict.empty() && !o.no_dict) require_file(o.dict, "--dict");
  if (!o.embeddings.empty()) require_file(o.embeddings, "--embeddings");

  const LabelScheme scheme = LabelScheme::from_name(o.labels, o.sentence_only);
  TrainingConfig cfg = o.config;
  cfg.model.encoder = parse_encoder_kind(o.mode);
  cfg.model.classifier = parse_classifier_mode(o.classifier);
  cfg.model.candidates = parse_candidate_set(o.candidates);
  cfg.model.num_classes = scheme.num_classes();
  cfg.optimizer = parse_optimizer_kind(o.optimizer);
  cfg.clip_mode = parse_clip_mode(o.clip_mode);
  cfg.validate();

  const auto train_trees = load_trees(o.train, scheme);
  std::vector<ParseTree> dev;
  if (!o.dev.empty()) dev = load_trees(o.dev, scheme);

  std::optional<PolarDictionary> dict;
  if (!o.dict.empty() && !o.no_dict) {
    std::vector<std::string> warnings;
    dict = load_dictionary_file(o.dict, scheme, std::nullopt, &warnings);
    for (const auto& w : warnings) std::cerr << "treesent: warning: " << w << '\n';
  }
  cfg.use_dictionary = dict.has_value();
  const PolarDictionary* dict_ptr = dict ? &*dict : nullptr;

  Vocabulary vocab = build_vocabulary(train_trees, dict_ptr);
  const std::uint64_t embed_seed = cfg.seed ^ kEmbeddingSeedSalt;
  EmbeddingTable table =
      o.embeddings.empty()
          ? random_embeddings(vocab, cfg.model.word_dim, embed_seed)
          : load_embeddings_file(o.embeddings, vocab, cfg.model.word_dim, embed_seed);
  Model model(cfg.model, std::move(vocab), std::move(table.vectors), cfg.seed);

  const auto prepared = prepare_training_trees(train_trees, dict_ptr, cfg);

  const fs::path metrics_path =
      o.metrics.empty() ? fs::path(o.checkpoint) / "metrics.jsonl" : fs::path(o.metrics);
  if (metrics_path.has_parent_path()) fs::create_directories(metrics_path.parent_path());
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write metrics file " + metrics_path.string());

  auto on_epoch = [&](const EpochRecord& r) {
    nlohmann::json j = to_json(r);
    j["schema"] = kMetricsSchema;
    metrics << j.dump() << '\n';
    metrics.flush();
    std::cerr << "epoch " << r.epoch << " train_loss " << r.objective;
    if (r.dev_accuracy) std::cerr << " dev_acc " << *r.dev_accuracy;
    std::cerr << '\n';
  };
  TrainResult result = train(model, prepared, dev, cfg, on_epoch);

  nlohmann::json summary = {
      {"schema", kMetricsSchema},
      {"summary", true},
      {"epochs", cfg.epochs},
      {"best_epoch", result.best_epoch},
  };
  summary["dev_acc"] = result.best_dev_accuracy ? nlohmann::json(*result.best_dev_accuracy)
                                                : nlohmann::json(nullptr);
  metrics << summary.dump() << '\n';

  save_checkpoint(o.checkpoint, model, cfg,
                  {scheme.name(), result.best_epoch, result.best_dev_accuracy});
  return 0;
}

int cmd_eval(const EvalOptions& o) {
  require_file(o.test, "--test");
  LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
  const auto trees = load_trees(o.test, LabelScheme::from_name(ck.info.label_scheme));
  const double acc = evaluate(trees, ck.model, o.threads);
  nlohmann::json j = {{"schema", kEvalSchema}, {"accuracy", acc}, {"n", trees.size()}};
  std::cout << j.dump() << '\n';
  return 0;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out;
}

// One cluster per sentence; candidate nodes carry the root's attention
// weight in their label.
void write_dot(std::ostream& out, const std::vector<ParseTree>& trees,
               const std::vector<Prediction>& preds) {
  out << "digraph attention {\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (std::size_t s = 0; s < trees.size(); ++s) {
    const ParseTree& t = trees[s];
    std::vector<std::optional<double>> weight(t.size());
    for (const auto& a : preds[s].attention)
      for (NodeId id = 0; id < static_cast<NodeId>(t.size()); ++id)
        if (t.node(id).span == a.node_span) {
          // Unary chains are collapsed, so at most one node has a given span.
          weight[id] = a.weight;
          break;
        }
    out << "  subgraph cluster_" << s << " {\n    label=\"sentence " << s << "\";\n";
    for (NodeId id = 0; id < static_cast<NodeId>(t.size()); ++id) {
      std::ostringstream label;
      label << dot_escape(t.node(id).is_leaf() ? t.node(id).token : yield_string(t, id));
      if (id == t.root()) label << "\\npredicted " << preds[s].argmax;
      if (weight[id]) label << "\\nw=" << *weight[id];
      out << "    s" << s << "_n" << id << " [label=\"" << label.str() << "\"";
      if (id == t.root()) out << ", style=bold";
      out << "];\n";
    }
    for (NodeId id = 0; id < static_cast<NodeId>(t.size()); ++id)
      for (NodeId c : t.node(id).children)
        out << "    s" << s << "_n" << id << " -> s" << s << "_n" << c << ";\n";
    out << "  }\n";
  }
  out << "}\n";
}

int cmd_dump_attention(const DumpOptions& o) {
  require_file(o.input, "--input");
  LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
  if (!ck.config.model.use_attention())
    throw std::runtime_error("checkpoint was trained without attention (classifier = hidden)");
  const auto trees = load_trees(o.input, LabelScheme::from_name(ck.info.label_scheme));
  const auto preds = predict_all(trees, ck.model);

  std::ofstream file;
  if (!o.output.empty()) {
    file.open(o.output, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + o.output);
  }
  std::ostream& out = o.output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    nlohmann::json j = to_json(preds[i]);
    j["schema"] = kAttentionSchema;
    j["sentence"] = i;
    j["tokens"] = yield_tokens(trees[i], trees[i].root());
    out << j.dump() << '\n';
  }
  if (!o.dot.empty()) {
    std::ofstream dot(o.dot, std::ios::binary);
    if (!dot) throw std::runtime_error("cannot write " + o.dot);
    write_dot(dot, trees, preds);
  }
  return 0;
}

int cmd_gradcheck(const GradCheckOptions& o) {
  GradCheckSuiteOptions opts;
  opts.seed = o.seed;
  opts.model_instances = o.instances;
  if (!o.corrupt_op.empty()) {
    opts.faulty_op = op_from_name(o.corrupt_op);
    if (!opts.faulty_op) throw std::runtime_error("--corrupt-op: unknown op " + o.corrupt_op);
  }
  GradCheckSuiteResult result = run_gradcheck_suite(opts);
  for (const auto& c : result.cases) {
    nlohmann::json j = to_json(c);
    j["schema"] = kGradCheckSchema;
    std::cout << j.dump() << '\n';
  }
  nlohmann::json summary = {{"schema", kGradCheckSchema},
                            {"summary", true},
                            {"checks", result.cases.size()},
                            {"max_relative_error", result.max_relative_error()},
                            {"passed", result.passed()}};
  std::cout << summary.dump() << '\n';
  return result.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-structured sentiment classifiers with subtree attention"};
  app.set_config("--config", "", "TOML/INI file with option defaults ([train] section etc.)");
  app.require_subcommand(1);

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_train_options(*train_cmd, train_opts);

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Root accuracy of a checkpoint on labeled trees");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--test", eval_opts.test, "Trees to evaluate")->required();
  eval_cmd->add_option("--threads", eval_opts.threads, "Evaluation threads (0 = all cores)");

  DumpOptions dump_opts;
  auto* dump_cmd =
      app.add_subcommand("dump-attention", "Root predictions with attention weights as JSON-lines");
  dump_cmd->add_option("--checkpoint", dump_opts.checkpoint, "Checkpoint directory")->required();
  dump_cmd->add_option("--input,--test", dump_opts.input, "Trees to annotate")->required();
  dump_cmd->add_option("--output", dump_opts.output, "JSON-lines output [stdout]");
  dump_cmd->add_option("--dot", dump_opts.dot, "Also write a Graphviz rendering");

  GradCheckOptions gc_opts;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc_cmd->add_option("--seed", gc_opts.seed, "Random seed")->capture_default_str();
  gc_cmd->add_option("--instances", gc_opts.instances, "Whole-model instances")
      ->capture_default_str();
  gc_cmd->add_option("--corrupt-op", gc_opts.corrupt_op,
                     "Scale one op's backward rule by 1.1 (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (eval_cmd->parsed()) return cmd_eval(eval_opts);
    if (dump_cmd->parsed()) return cmd_dump_attention(dump_opts);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_opts);
  } catch (const std::exception& e) {
    std::cerr << "treesent: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
