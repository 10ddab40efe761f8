#include <cmath>
#include <random>

#include "doctest.h"
#include "treesent/graph.hpp"

using namespace treesent;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = u(rng);
  return m;
}

// Contracts a column with a fixed random direction so every output entry
// carries a distinct weight in the scalar loss.
struct Probe {
  Matrix direction;
  Value operator()(Tape& t, Value v) const {
    return t.sum(t.mul(v, t.constant(direction.topRows(v.rows()))));
  }
};

struct OpCase {
  Op op;
  std::vector<Parameter> params;
  std::function<Value(Tape&, std::vector<Parameter>&, const Probe&)> build;
};

std::vector<OpCase> op_cases(std::mt19937_64& rng) {
  std::vector<OpCase> cases;
  auto P = [&](const char* name, int r, int c, double lo = -1.0, double hi = 1.0) {
    return Parameter(name, random_matrix(rng, r, c, lo, hi));
  };
  cases.push_back({Op::lookup, {Parameter("table", random_matrix(rng, 5, 3), true)},
                   [](Tape& t, auto& p, const Probe& pr) {
                     return t.add(pr(t, t.lookup(p[0], 2)), pr(t, t.lookup(p[0], 4)));
                   }});
  cases.push_back({Op::matvec, {P("w", 4, 3), P("x", 3, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.matvec(t.param(p[0]), t.param(p[1])));
                   }});
  cases.push_back({Op::concat, {P("a", 2, 1), P("b", 3, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     const Value parts[] = {t.param(p[0]), t.param(p[1])};
                     return pr(t, t.tanh(t.concat(parts)));
                   }});
  cases.push_back({Op::add, {P("a", 4, 1), P("b", 4, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.tanh(t.add(t.param(p[0]), t.param(p[1]))));
                   }});
  cases.push_back({Op::mul, {P("a", 4, 1), P("b", 4, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.mul(t.param(p[0]), t.param(p[1])));
                   }});
  cases.push_back({Op::sigmoid, {P("x", 4, 1, -3, 3)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.sigmoid(t.param(p[0])));
                   }});
  cases.push_back({Op::tanh, {P("x", 4, 1, -2, 2)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.tanh(t.param(p[0])));
                   }});
  cases.push_back({Op::exp, {P("x", 4, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.exp(t.param(p[0])));
                   }});
  cases.push_back({Op::weighted_sum, {P("w", 3, 1), P("u", 4, 1), P("v", 4, 1), P("z", 4, 1)},
                   [](Tape& t, auto& p, const Probe& pr) {
                     const Value vs[] = {t.param(p[1]), t.param(p[2]), t.param(p[3])};
                     return pr(t, t.weighted_sum(t.param(p[0]), vs));
                   }});
  cases.push_back({Op::normalize, {P("x", 4, 1, 0.5, 1.5)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.normalize(t.param(p[0])));
                   }});
  cases.push_back({Op::softmax_xent, {P("z", 5, 1, -2, 2)}, [](Tape& t, auto& p, const Probe&) {
                     return t.softmax_cross_entropy(t.param(p[0]), 3);
                   }});
  cases.push_back({Op::squared_l2, {P("a", 3, 2), P("b", 4, 1)}, [](Tape& t, auto& p, const Probe&) {
                     Parameter* ps[] = {&p[0], &p[1]};
                     return t.squared_l2(ps);
                   }});
  cases.push_back({Op::scale, {P("x", 4, 1)}, [](Tape& t, auto& p, const Probe& pr) {
                     return pr(t, t.scale(t.tanh(t.param(p[0])), -2.5));
                   }});
  cases.push_back({Op::sum, {P("x", 4, 1)}, [](Tape& t, auto& p, const Probe&) {
                     return t.sum(t.exp(t.param(p[0])));
                   }});
  return cases;
}

std::vector<Parameter*> pointers(std::vector<Parameter>& ps) {
  std::vector<Parameter*> out;
  for (auto& p : ps) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("x*x at x=3 has gradient 6") {
  Parameter x("x", Matrix::Constant(1, 1, 3.0));
  Tape t;
  Value xv = t.param(x);
  Value loss = t.mul(xv, xv);
  CHECK(loss.scalar() == 9.0);
  t.backward(loss);
  CHECK(x.grad(0, 0) == 6.0);
  CHECK(t.adjoint(xv)(0, 0) == 6.0);
}

TEST_CASE("sigmoid(0) has derivative 0.25 at the pre-activation") {
  Tape t;
  Value z = t.constant(Matrix::Zero(1, 1));
  Value loss = t.sigmoid(z);
  CHECK(loss.scalar() == 0.5);
  t.backward(loss);
  CHECK(t.adjoint(z)(0, 0) == 0.25);
}

TEST_CASE("every op passes a single-op gradient check at 1e-6") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Probe probe{random_matrix(rng, 8, 1)};
    for (auto& c : op_cases(rng)) {
      CAPTURE(op_name(c.op));
      auto ps = pointers(c.params);
      auto f = [&](Tape& t) { return c.build(t, c.params, probe); };
      auto report = grad_check(f, ps, 1e-4, 1e-6);
      CHECK(report.passed);
      CHECK(report.max_relative_error <= 1e-6);
    }
  }
}

TEST_CASE("a corrupted backward rule is caught") {
  std::mt19937_64 rng(4);
  Probe probe{random_matrix(rng, 8, 1)};
  for (auto& c : op_cases(rng)) {
    if (c.op == Op::lookup) continue;  // lookup is the only op in its case; covered below
    CAPTURE(op_name(c.op));
    auto ps = pointers(c.params);
    auto f = [&](Tape& t) { return c.build(t, c.params, probe); };
    auto report = grad_check(f, ps, 1e-4, 1e-6, c.op);
    CHECK_FALSE(report.passed);
    CHECK(report.max_relative_error > 1e-2);
  }
  auto cases = op_cases(rng);
  auto ps = pointers(cases[0].params);
  auto f = [&](Tape& t) { return cases[0].build(t, cases[0].params, probe); };
  CHECK_FALSE(grad_check(f, ps, 1e-4, 1e-6, Op::lookup).passed);
}

TEST_CASE("linear functions check to machine precision") {
  std::mt19937_64 rng(8);
  Parameter w("w", random_matrix(rng, 3, 4));
  Matrix x = random_matrix(rng, 4, 1);
  Matrix c = random_matrix(rng, 3, 1);
  auto f = [&](Tape& t) {
    return t.sum(t.mul(t.constant(c), t.scale(t.matvec(t.param(w), t.constant(x)), 2.0)));
  };
  Parameter* ps[] = {&w};
  auto report = grad_check(f, ps);
  CHECK(report.max_relative_error < 1e-9);
  CHECK(w.grad.isZero());  // grad_check leaves gradients cleared
}

TEST_CASE("normalize produces a distribution") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Value n = t.normalize(t.constant(random_matrix(rng, 6, 1, 1e-3, 10.0)));
    CHECK(n.value().minCoeff() >= 0.0);
    CHECK(std::abs(n.value().sum() - 1.0) <= 1e-12);
  }
  Tape t;
  CHECK_THROWS_AS(t.normalize(t.constant(Matrix::Zero(3, 1))), GraphError);
}

TEST_CASE("softmax cross-entropy of uniform logits is log(n)") {
  Tape t;
  Value loss = t.softmax_cross_entropy(t.constant(Matrix::Zero(2, 1)), 1);
  CHECK(loss.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(t.probabilities(loss)(0, 0) == 0.5);
  Value big = t.softmax_cross_entropy(t.constant(Matrix{{800.0}, {0.0}}), 0);
  CHECK(std::isfinite(big.scalar()));
  CHECK(big.scalar() < 1e-12);
}

TEST_CASE("reset leaves no state behind") {
  Parameter x("x", Matrix{{0.3}, {-0.7}});
  Tape t;
  auto run = [&] {
    x.zero_grad();
    t.reset();
    Value loss = t.sum(t.tanh(t.mul(t.param(x), t.param(x))));
    t.backward(loss);
    return Matrix(x.grad);
  };
  Matrix first = run();
  Matrix second = run();
  CHECK(first == second);
  CHECK(t.size() > 0);
  t.reset();
  CHECK(t.size() == 0);
}

TEST_CASE("gradients accumulate across tapes until cleared") {
  Parameter x("x", Matrix::Constant(1, 1, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(t.mul(t.param(x), t.param(x)));
  }
  CHECK(x.grad(0, 0) == 8.0);
  x.zero_grad();
  CHECK(x.grad(0, 0) == 0.0);
}

TEST_CASE("row-sparse parameters track touched rows") {
  Parameter table("table", Matrix::Ones(4, 2), true);
  Tape t;
  t.backward(t.sum(t.lookup(table, 2)));
  CHECK(table.touched_rows() == std::vector<Eigen::Index>{2});
  CHECK(table.grad.row(2) == Eigen::RowVector2d(1, 1));
  CHECK(table.grad.row(0).isZero());
  table.zero_grad();
  CHECK(table.grad.isZero());
  CHECK(table.touched_rows().empty());
}

TEST_CASE("graph errors") {
  Tape t, other;
  Value a = t.constant(Matrix::Ones(2, 1));
  Value b = t.constant(Matrix::Ones(3, 1));
  CHECK_THROWS_AS(t.add(a, b), GraphError);
  CHECK_THROWS_AS(t.matvec(a, b), GraphError);
  CHECK_THROWS_AS(t.backward(a), GraphError);  // not a scalar
  CHECK_THROWS_AS(other.backward(t.sum(a)), GraphError);
  CHECK_THROWS_AS(t.softmax_cross_entropy(a, 2), GraphError);
  CHECK(op_from_name("tanh") == Op::tanh);
  CHECK_FALSE(op_from_name("relu"));
}
