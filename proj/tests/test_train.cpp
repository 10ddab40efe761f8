#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "treesent/train.hpp"

using namespace treesent;

namespace {

const LabelScheme kBin = LabelScheme::binary();

ModelConfig small(ClassifierMode mode = ClassifierMode::concat, int classes = 2) {
  ModelConfig cfg;
  cfg.classifier = mode;
  cfg.word_dim = 6;
  cfg.hidden_dim = 6;
  cfg.num_classes = classes;
  return cfg;
}

Vocabulary corpus_vocab(const std::vector<ParseTree>& trees) {
  auto dict = fixtures::marker_dictionary();
  return build_vocabulary(trees, &dict);
}

void zero_classifier(Model& m) {
  auto& cp = m.classifier();
  cp.hidden_w.value.setZero();
  cp.hidden_b.value.setZero();
  if (cp.attention_w) {
    cp.attention_w->value.setZero();
    cp.attention_b->value.setZero();
  }
}

}  // namespace

TEST_CASE("uniform prediction on one binary node costs ln 2") {
  auto tree = parse_sexpr("(1 (_ the) (_ movie))", kBin);
  for (auto mode : {ClassifierMode::hidden, ClassifierMode::concat}) {
    Model m = fixtures::make_model(small(mode), fixtures::vocab_of_words(), 1);
    zero_classifier(m);
    Tape t;
    auto sl = sentence_loss(t, tree, m);
    CHECK(sl.loss_nodes == 1);
    CHECK(sl.loss.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
}

TEST_CASE("confident correct prediction has near-zero loss") {
  auto tree = parse_sexpr("(1 (_ the) (_ movie))", kBin);
  Model m = fixtures::make_model(small(), fixtures::vocab_of_words(), 1);
  zero_classifier(m);
  m.classifier().attention_b->value(1, 0) = 50.0;
  Tape t;
  CHECK(sentence_loss(t, tree, m).loss.scalar() < 1e-20);
}

TEST_CASE("sentence loss is the sum of per-node cross-entropies") {
  auto tree = parse_sexpr("(1 (_ (_ the) (_ awful)) (_ movie))", kBin);
  auto annotated = annotate(tree, fixtures::marker_dictionary());
  REQUIRE(collect_loss_nodes(annotated) == std::vector<NodeId>{4, 1});
  Model m = fixtures::make_model(small(), corpus_vocab({tree}), 1);
  fixtures::randomize(m, 8);

  auto node_loss = [&](NodeId id, int gold) {
    Tape t;
    auto enc = encode_tree(t, annotated, m);
    return t.softmax_cross_entropy(classify(t, id, annotated, enc, m).logits, gold).scalar();
  };
  Tape t;
  const double total = sentence_loss(t, annotated, m).loss.scalar();
  CHECK(total == doctest::Approx(node_loss(4, 1) + node_loss(1, 0)).epsilon(1e-14));
  Tape u;
  CHECK(sentence_loss(u, tree, m).loss.scalar() ==
        doctest::Approx(node_loss(4, 1)).epsilon(1e-14));
}

TEST_CASE("labels outside the model's classes are rejected") {
  auto tree = parse_sexpr("(4 (_ the) (_ movie))", LabelScheme::fine5());
  Model m = fixtures::make_model(small(), fixtures::vocab_of_words(), 1);
  Tape t;
  CHECK_THROWS_AS(sentence_loss(t, tree, m), TrainError);
}

TEST_CASE("l2 penalty is half lambda times the squared norm") {
  Model m = fixtures::make_model(small(), fixtures::vocab_of_words(), 1);
  Tape t;
  CHECK(l2_penalty(t, m, 0.2).scalar() == doctest::Approx(0.1 * m.squared_norm(true)));
  CHECK(l2_penalty(t, m, 0.2, false).scalar() == doctest::Approx(0.1 * m.squared_norm(false)));
  CHECK(m.squared_norm(false) < m.squared_norm(true));
}

TEST_CASE("global-norm clipping") {
  Parameter a("a", Matrix::Zero(2, 1)), b("b", Matrix::Zero(1, 1));
  Parameter* ps[] = {&a, &b};
  a.grad << 6.0, 0.0;
  b.grad << 8.0;  // norm 10
  auto r = clip_gradients(ps, 5.0);
  CHECK(r.clipped);
  CHECK(r.norm_before == 10.0);
  CHECK(a.grad(0, 0) == 3.0);
  CHECK(b.grad(0, 0) == 4.0);
  CHECK(global_grad_norm(ps) <= 5.0 + 1e-12);

  a.grad << 0.0, 3.0;
  b.grad << 0.0;
  CHECK_FALSE(clip_gradients(ps, 5.0).clipped);
  CHECK(a.grad(1, 0) == 3.0);

  a.grad.setZero();
  b.grad.setZero();
  CHECK_FALSE(clip_gradients(ps, 5.0).clipped);
  CHECK(a.grad.isZero());
}

TEST_CASE("per-element clipping") {
  Parameter a("a", Matrix::Zero(3, 1));
  Parameter* ps[] = {&a};
  a.grad << 7.0, -9.0, 1.0;
  CHECK(clip_gradients(ps, 5.0, ClipMode::per_element).clipped);
  CHECK(a.grad == Matrix{{5.0}, {-5.0}, {1.0}});
}

TEST_CASE("AdaGrad steps") {
  Parameter x("x", Matrix::Zero(1, 1));
  Parameter* ps[] = {&x};
  AdaGrad opt(0.005, 1e-8);
  x.grad << 1.0;
  opt.step(ps, 0.0);
  CHECK(x.value(0, 0) == doctest::Approx(-0.005).epsilon(1e-6));
  const double before = x.value(0, 0);
  opt.step(ps, 0.0);
  CHECK(x.value(0, 0) - before == doctest::Approx(-0.005 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("weight decay is added to the gradient") {
  Parameter x("x", Matrix::Constant(1, 1, 2.0));
  Parameter* ps[] = {&x};
  AdaGrad opt(0.005);
  opt.step(ps, 0.1);  // g = 0 + 0.1 * 2
  CHECK(x.value(0, 0) == doctest::Approx(2.0 - 0.005).epsilon(1e-9));
  AdaGrad skip(0.005);
  Parameter y("y", Matrix::Constant(1, 1, 2.0));
  Parameter* py[] = {&y};
  skip.step(py, 0.1, &y);
  CHECK(y.value(0, 0) == 2.0);
}

TEST_CASE("AdaDelta leaves parameters alone under zero gradient") {
  Parameter x("x", Matrix{{0.3}, {-1.2}});
  Parameter* ps[] = {&x};
  AdaDelta opt(0.95, 1e-6);
  for (int i = 0; i < 3; ++i) opt.step(ps, 0.0);
  CHECK(x.value == Matrix{{0.3}, {-1.2}});
  x.grad << 1.0, -1.0;
  opt.step(ps, 0.0);
  CHECK(x.value(0, 0) < 0.3);
  CHECK(x.value(1, 0) > -1.2);
}

TEST_CASE("sparse parameters only update touched rows") {
  Parameter table("table", Matrix::Ones(3, 2), true);
  Parameter* ps[] = {&table};
  {
    Tape t;
    t.backward(t.sum(t.lookup(table, 1)));
  }
  AdaGrad opt(0.1);
  opt.step(ps, 0.5);
  CHECK(table.value.row(0) == Eigen::RowVector2d(1, 1));
  CHECK(table.value.row(2) == Eigen::RowVector2d(1, 1));
  CHECK(table.value(1, 0) < 1.0);
}

TEST_CASE("config validation and json round trip") {
  TrainingConfig cfg;
  cfg.optimizer = OptimizerKind::adadelta;
  cfg.model.classifier = ClassifierMode::attention_only;
  cfg.model.attention_dim = 7;
  cfg.seed = 99;
  cfg.clip_mode = ClipMode::per_element;
  auto back = training_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.model.attention_dim == 7);
  CHECK(back.seed == 99);

  TrainingConfig bad;
  bad.epochs = -1;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.learning_rate = -1;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS_AS(parse_optimizer_kind("sgd"), TrainError);
}

TEST_CASE("epoch record json") {
  EpochRecord r;
  r.epoch = 3;
  r.objective = 1.5;
  auto j = to_json(r);
  CHECK(j["epoch"] == 3);
  CHECK(j["train_loss"] == 1.5);
  CHECK(j["dev_acc"].is_null());
  r.dev_accuracy = 0.25;
  CHECK(to_json(r)["dev_acc"] == 0.25);
}

TEST_CASE("evaluate reads only root labels") {
  auto trees = fixtures::separable_corpus();
  Model m = fixtures::make_model(small(ClassifierMode::hidden), corpus_vocab(trees), 1);
  zero_classifier(m);
  m.classifier().hidden_b.value(0, 0) = 1.0;  // always class 0

  std::vector<ParseTree> ten;
  for (int i = 0; i < 10; ++i)
    ten.push_back(parse_sexpr(i < 3 ? "(0 (_ a) (_ b))" : "(1 (_ a) (_ b))", kBin));
  CHECK(evaluate(ten, m) == doctest::Approx(0.3).epsilon(1e-15));
  std::vector<ParseTree> zeros(ten.begin(), ten.begin() + 3);
  CHECK(evaluate(zeros, m) == 1.0);
  CHECK_THROWS_AS(evaluate(std::span<const ParseTree>(), m), TrainError);
}

TEST_CASE("decoding ignores dictionary labels") {
  auto trees = fixtures::separable_corpus();
  auto dict = fixtures::marker_dictionary();
  Model m = fixtures::make_model(small(), corpus_vocab(trees), 5);
  fixtures::randomize(m, 6);
  TrainingConfig cfg;
  auto annotated = prepare_training_trees(trees, &dict, cfg);
  cfg.use_dictionary = false;
  auto plain = prepare_training_trees(trees, &dict, cfg);
  CHECK(plain == trees);
  auto a = predict_all(annotated, m, 1);
  auto b = predict_all(plain, m, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].distribution == b[i].distribution);
    CHECK(to_json(a[i]) == to_json(b[i]));
  }
  CHECK(evaluate(annotated, m) == evaluate(plain, m));
}

TEST_CASE("measure_objective decomposes into cross-entropy and L2") {
  auto trees = fixtures::separable_corpus();
  Model m = fixtures::make_model(small(), corpus_vocab(trees), 5);
  TrainingConfig cfg;
  cfg.model = m.config();
  cfg.weight_decay = 0.01;
  auto r = measure_objective(trees, m, cfg);
  double ce = 0.0;
  for (const auto& t : trees) {
    Tape tape;
    ce += sentence_loss(tape, t, m).loss.scalar();
  }
  CHECK(r.cross_entropy == doctest::Approx(ce / 20.0).epsilon(1e-14));
  CHECK(r.l2 == doctest::Approx(0.005 * m.squared_norm(true)).epsilon(1e-14));
  CHECK(r.objective == r.cross_entropy + r.l2);
  CHECK(r.labeled_nodes == 20);
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto trees = fixtures::separable_corpus();
  auto dict = fixtures::marker_dictionary();
  TrainingConfig cfg;
  cfg.model = small();
  cfg.epochs = 3;
  cfg.learning_rate = 0.05;
  auto prepared = prepare_training_trees(trees, &dict, cfg);
  auto run = [&] {
    Model m = fixtures::make_model(cfg.model, corpus_vocab(trees), 3);
    auto result = train(m, prepared, trees, cfg);
    return std::make_pair(result, m.snapshot());
  };
  auto [r1, p1] = run();
  auto [r2, p2] = run();
  REQUIRE(r1.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) CHECK(to_json(r1.history[e]) == to_json(r2.history[e]));
  CHECK(p1 == p2);
}

TEST_CASE("the best dev epoch is restored") {
  auto trees = fixtures::separable_corpus();
  TrainingConfig cfg;
  cfg.model = small();
  cfg.epochs = 6;
  cfg.learning_rate = 0.05;
  Model m = fixtures::make_model(cfg.model, corpus_vocab(trees), 3);
  std::vector<ParseTree> dev(trees.begin(), trees.begin() + 7);
  auto result = train(m, trees, dev, cfg);
  REQUIRE(result.best_dev_accuracy);
  CHECK(evaluate(dev, m) == *result.best_dev_accuracy);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& r : result.history)
    if (*r.dev_accuracy > best) best = *r.dev_accuracy, best_epoch = r.epoch;
  CHECK(result.best_epoch == best_epoch);
}

TEST_CASE("strong weight decay shrinks the parameters") {
  auto trees = fixtures::separable_corpus();
  TrainingConfig cfg;
  cfg.model = small();
  cfg.epochs = 15;
  cfg.learning_rate = 0.05;
  auto norm_after = [&](double lambda) {
    cfg.weight_decay = lambda;
    Model m = fixtures::make_model(cfg.model, corpus_vocab(trees), 3);
    train(m, trees, {}, cfg);
    return m.squared_norm(true);
  };
  CHECK(norm_after(10.0) < norm_after(0.0));
}

TEST_CASE("small corpus is fit by Tree-LSTM with attention") {
  auto trees = fixtures::separable_corpus();
  auto dict = fixtures::marker_dictionary();
  TrainingConfig cfg;
  cfg.model = small();
  cfg.model.word_dim = 16;
  cfg.model.hidden_dim = 16;
  cfg.epochs = 60;
  cfg.learning_rate = 0.05;
  Model m = fixtures::make_model(cfg.model, corpus_vocab(trees), 3);
  train(m, prepare_training_trees(trees, &dict, cfg), {}, cfg);
  CHECK(evaluate(trees, m) == 1.0);
}

TEST_CASE("TREESENT_THREADS caps worker count") {
  CHECK(resolve_threads(3) >= 1);
  setenv("TREESENT_THREADS", "2", 1);
  CHECK(resolve_threads(8) == 2);
  CHECK(resolve_threads(1) == 1);
  unsetenv("TREESENT_THREADS");
  CHECK(resolve_threads(8) == 8);
}
