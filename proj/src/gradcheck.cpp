#include "treesent/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "treesent/embed.hpp"
#include "treesent/lexicon.hpp"
#include "treesent/train.hpp"
#include "treesent/tree.hpp"

namespace treesent {

namespace {

Matrix uniform(std::mt19937_64& rng, int rows, int cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = u(rng);
  return m;
}

struct OpInstance {
  Op op;
  std::vector<Parameter> params;
  std::function<Value(Tape&, std::vector<Parameter>&, const Matrix&)> build;
};

// Contract a vector with a fixed direction so the scalar loss weighs each
// output entry differently.
Value probe(Tape& t, Value v, const Matrix& direction) {
  return t.sum(t.mul(v, t.constant(direction.topRows(v.rows()))));
}

std::vector<OpInstance> op_instances(std::mt19937_64& rng) {
  auto P = [&](const char* name, int r, int c, double lo = -1.0, double hi = 1.0) {
    return Parameter(name, uniform(rng, r, c, lo, hi));
  };
  std::vector<OpInstance> out;
  out.push_back({Op::lookup, {Parameter("table", uniform(rng, 5, 3, -1, 1), true)},
                 [](Tape& t, auto& p, const Matrix& d) {
                   return t.add(probe(t, t.lookup(p[0], 1), d), probe(t, t.lookup(p[0], 3), d));
                 }});
  out.push_back({Op::parameter, {P("x", 4, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.param(p[0]), d);
                 }});
  out.push_back({Op::matvec, {P("w", 4, 3), P("x", 3, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.matvec(t.param(p[0]), t.param(p[1])), d);
                 }});
  out.push_back({Op::concat, {P("a", 2, 1), P("b", 3, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   const Value parts[] = {t.param(p[0]), t.param(p[1])};
                   return probe(t, t.concat(parts), d);
                 }});
  out.push_back({Op::add, {P("a", 4, 1), P("b", 4, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.add(t.param(p[0]), t.param(p[1])), d);
                 }});
  out.push_back({Op::mul, {P("a", 4, 1), P("b", 4, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.mul(t.param(p[0]), t.param(p[1])), d);
                 }});
  out.push_back({Op::sigmoid, {P("x", 4, 1, -3, 3)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.sigmoid(t.param(p[0])), d);
                 }});
  out.push_back({Op::tanh, {P("x", 4, 1, -2, 2)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.tanh(t.param(p[0])), d);
                 }});
  out.push_back({Op::exp, {P("x", 4, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.exp(t.param(p[0])), d);
                 }});
  out.push_back({Op::weighted_sum, {P("w", 3, 1), P("u", 4, 1), P("v", 4, 1), P("z", 4, 1)},
                 [](Tape& t, auto& p, const Matrix& d) {
                   const Value vs[] = {t.param(p[1]), t.param(p[2]), t.param(p[3])};
                   return probe(t, t.weighted_sum(t.param(p[0]), vs), d);
                 }});
  out.push_back({Op::normalize, {P("x", 4, 1, 0.5, 1.5)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.normalize(t.param(p[0])), d);
                 }});
  out.push_back({Op::softmax_xent, {P("z", 5, 1, -2, 2)}, [](Tape& t, auto& p, const Matrix&) {
                   return t.softmax_cross_entropy(t.param(p[0]), 2);
                 }});
  out.push_back({Op::squared_l2, {P("a", 3, 2), P("b", 4, 1)}, [](Tape& t, auto& p, const Matrix&) {
                   Parameter* ps[] = {&p[0], &p[1]};
                   return t.squared_l2(ps);
                 }});
  out.push_back({Op::scale, {P("x", 4, 1)}, [](Tape& t, auto& p, const Matrix& d) {
                   return probe(t, t.scale(t.param(p[0]), -1.5), d);
                 }});
  out.push_back({Op::sum, {P("x", 4, 1)}, [](Tape& t, auto& p, const Matrix&) {
                   return t.sum(t.param(p[0]));
                 }});
  return out;
}

std::string random_bracketing(std::mt19937_64& rng, const std::vector<std::string>& tokens,
                              int begin, int end) {
  if (end - begin == 1) return tokens[begin];
  std::uniform_int_distribution<int> split(begin + 1, end - 1);
  const int mid = split(rng);
  return "(_ " + random_bracketing(rng, tokens, begin, mid) + " " +
         random_bracketing(rng, tokens, mid, end) + ")";
}

}  // namespace

bool GradCheckSuiteResult::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.report.passed; });
}

double GradCheckSuiteResult::max_relative_error() const {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.report.max_relative_error);
  return m;
}

GradCheckCase model_gradcheck_instance(std::uint64_t seed, EncoderKind encoder,
                                       ClassifierMode mode, const GradCheckSuiteOptions& options) {
  std::mt19937_64 rng(seed);
  const LabelScheme scheme = LabelScheme::fine5();
  Vocabulary vocab;
  for (int i = 0; i < 12; ++i) vocab.add("w" + std::to_string(i));

  std::uniform_int_distribution<int> num_leaves(2, 9);
  std::uniform_int_distribution<int> word(1, vocab.size() - 1);
  std::uniform_int_distribution<int> cls(0, scheme.num_classes() - 1);
  const int leaves = num_leaves(rng);
  std::vector<std::string> tokens;
  for (int i = 0; i < leaves; ++i) tokens.push_back(vocab.token(word(rng)));
  std::string body = random_bracketing(rng, tokens, 0, leaves);
  // Replace the outer "_" with a root label; a 1-leaf body cannot occur.
  body = "(" + std::to_string(cls(rng)) + body.substr(2);
  ParseTree tree = binarize(parse_sexpr(body, scheme));

  // One dictionary entry whose surface is the yield of a non-root node,
  // internal when the tree has any.
  std::vector<NodeId> internal, others;
  for (NodeId id = 0; id < tree.root(); ++id)
    (tree.node(id).is_leaf() ? others : internal).push_back(id);
  const auto& pool = internal.empty() ? others : internal;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  PolarDictionary dict(scheme.num_classes());
  dict.insert(yield_string(tree, pool[pick(rng)]), cls(rng));
  tree = annotate(tree, dict);

  ModelConfig cfg;
  cfg.encoder = encoder;
  cfg.classifier = mode;
  cfg.word_dim = options.hidden_dim;
  cfg.hidden_dim = options.hidden_dim;
  cfg.attention_dim = options.attention_dim;
  cfg.num_classes = scheme.num_classes();
  Model model(cfg, vocab, random_embeddings(vocab, cfg.word_dim, seed + 1).vectors, seed + 2);
  // Generic values everywhere, including biases that start at constants.
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Parameter* p : model.parameters())
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value(k) = u(rng);

  const double lambda = options.weight_decay;
  auto f = [&](Tape& t) {
    return t.add(sentence_loss(t, tree, model).loss, l2_penalty(t, model, lambda));
  };
  auto params = model.parameters();
  GradCheckCase out;
  out.name = "model/" + to_string(encoder) + "/" + to_string(mode) + "/seed=" +
             std::to_string(seed) + "/leaves=" + std::to_string(leaves) +
             "/loss_nodes=" + std::to_string(collect_loss_nodes(tree).size());
  out.tolerance = options.model_tolerance;
  out.report = grad_check(f, params, 1e-4, options.model_tolerance, options.faulty_op);
  return out;
}

GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  GradCheckSuiteResult result;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix direction(8, 1);
  for (Eigen::Index k = 0; k < direction.size(); ++k) direction(k) = u(rng);
  for (auto& inst : op_instances(rng)) {
    std::vector<Parameter*> ps;
    for (auto& p : inst.params) ps.push_back(&p);
    auto f = [&](Tape& t) { return inst.build(t, inst.params, direction); };
    GradCheckCase c;
    c.name = std::string("op/") + op_name(inst.op);
    c.tolerance = options.op_tolerance;
    c.report = grad_check(f, ps, 1e-4, options.op_tolerance, options.faulty_op);
    result.cases.push_back(std::move(c));
  }
  std::uniform_int_distribution<std::uint64_t> seeds(1, 1u << 30);
  for (int i = 0; i < options.model_instances; ++i)
    result.cases.push_back(model_gradcheck_instance(seeds(rng), EncoderKind::treelstm,
                                                    ClassifierMode::concat, options));
  return result;
}

nlohmann::json to_json(const GradCheckCase& c) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : c.report.entries)
    tensors.push_back({{"name", e.name}, {"relative_error", e.relative_error}, {"passed", e.passed}});
  return {
      {"check", c.name},
      {"tolerance", c.tolerance},
      {"max_relative_error", c.report.max_relative_error},
      {"passed", c.report.passed},
      {"tensors", std::move(tensors)},
  };
}

}  // namespace treesent
