#include "treesent/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace treesent {

namespace {

constexpr double kFaultFactor = 1.1;

// Tensors whose true gradient is zero (e.g. a bias that cancels under
// normalization) only see finite-difference round-off; measuring that
// against a zero norm would report noise as a 100% error.
constexpr double kGradCheckFloor = 1e-7;

constexpr std::array<const char*, 16> kOpNames = {
    "constant", "parameter", "lookup",       "matvec",    "concat",       "add",
    "mul",      "sigmoid",   "tanh",         "exp",       "weighted_sum", "normalize",
    "softmax_xent", "squared_l2", "scale",   "sum",
};

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw GraphError(std::string(op) + ": " + what);
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

const char* op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i)
    if (name == kOpNames[i]) return static_cast<Op>(i);
  return std::nullopt;
}

Parameter::Parameter(std::string n, Matrix v, bool sparse)
    : name(std::move(n)), value(std::move(v)), row_sparse(sparse) {
  grad = Matrix::Zero(value.rows(), value.cols());
}

void Parameter::zero_grad() {
  if (row_sparse && !all_rows_touched_) {
    for (auto r : touched_) grad.row(r).setZero();
  } else {
    grad.setZero();
  }
  touched_.clear();
  all_rows_touched_ = false;
}

void Parameter::mark_row(Eigen::Index row) {
  if (row_sparse) touched_.push_back(row);
}

std::vector<Eigen::Index> Parameter::touched_rows() const {
  if (!row_sparse || all_rows_touched_) {
    std::vector<Eigen::Index> all(value.rows());
    for (Eigen::Index r = 0; r < value.rows(); ++r) all[r] = r;
    return all;
  }
  std::vector<Eigen::Index> rows = touched_;
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

const Matrix& Value::value() const {
  if (!tape_) throw GraphError("use of an empty Value");
  return tape_->value(*this);
}

double Value::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw GraphError("value of shape " + shape(v) + " is not a scalar");
  return v(0, 0);
}

Value Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

const Tape::Node& Tape::node_of(const Value& v) const {
  if (v.tape_ != this || v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size()))
    throw GraphError("value is not recorded on this tape");
  return nodes_[v.id_];
}

const Matrix& Tape::value_of(int id) const {
  const Node& n = nodes_[id];
  return n.op == Op::parameter ? n.param->value : n.value;
}

const Matrix& Tape::value(const Value& v) const {
  node_of(v);
  return value_of(v.id_);
}

const Matrix& Tape::adjoint(const Value& v) const {
  const Node& n = node_of(v);
  if (n.op == Op::parameter) return n.param->grad;
  return n.adjoint;
}

const Matrix& Tape::probabilities(const Value& loss) const {
  const Node& n = node_of(loss);
  if (n.op != Op::softmax_xent) throw GraphError("value is not a softmax cross-entropy");
  return n.cache;
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
}

Value Tape::constant(Matrix v) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(v);
  return record(std::move(n));
}

Value Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Value(this, it->second);
  Node n;
  n.op = Op::parameter;
  n.param = &p;
  Value v = record(std::move(n));
  param_nodes_.emplace(&p, v.id_);
  return v;
}

Value Tape::lookup(Parameter& table, Eigen::Index row) {
  require(row >= 0 && row < table.value.rows(), "lookup",
          "row " + std::to_string(row) + " outside table of shape " + shape(table.value));
  Node n;
  n.op = Op::lookup;
  n.param = &table;
  n.row = row;
  n.value = table.value.row(row).transpose();
  return record(std::move(n));
}

Value Tape::matvec(Value w, Value x) {
  const Matrix& wm = value(w);
  const Matrix& xm = value(x);
  require(xm.cols() == 1 && wm.cols() == xm.rows(), "matvec",
          "cannot multiply " + shape(wm) + " by " + shape(xm));
  Node n;
  n.op = Op::matvec;
  n.value = wm * xm;
  n.parents = {w.id_, x.id_};
  return record(std::move(n));
}

Value Tape::concat(std::span<const Value> parts) {
  require(!parts.empty(), "concat", "no operands");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    const Matrix& m = value(p);
    require(m.cols() == 1, "concat", "operand of shape " + shape(m) + " is not a column");
    rows += m.rows();
  }
  Node n;
  n.op = Op::concat;
  n.value.resize(rows, 1);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    const Matrix& m = value(p);
    n.value.middleRows(at, m.rows()) = m;
    at += m.rows();
    n.parents.push_back(p.id_);
  }
  return record(std::move(n));
}

Value Tape::add(Value a, Value b) {
  const Matrix& am = value(a);
  const Matrix& bm = value(b);
  require(am.rows() == bm.rows() && am.cols() == bm.cols(), "add",
          shape(am) + " vs " + shape(bm));
  Node n;
  n.op = Op::add;
  n.value = am + bm;
  n.parents = {a.id_, b.id_};
  return record(std::move(n));
}

Value Tape::mul(Value a, Value b) {
  const Matrix& am = value(a);
  const Matrix& bm = value(b);
  require(am.rows() == bm.rows() && am.cols() == bm.cols(), "mul",
          shape(am) + " vs " + shape(bm));
  Node n;
  n.op = Op::mul;
  n.value = am.cwiseProduct(bm);
  n.parents = {a.id_, b.id_};
  return record(std::move(n));
}

Value Tape::sigmoid(Value x) {
  Node n;
  n.op = Op::sigmoid;
  n.value = value(x).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  n.parents = {x.id_};
  return record(std::move(n));
}

Value Tape::tanh(Value x) {
  Node n;
  n.op = Op::tanh;
  n.value = value(x).array().tanh().matrix();
  n.parents = {x.id_};
  return record(std::move(n));
}

Value Tape::exp(Value x) {
  Node n;
  n.op = Op::exp;
  n.value = value(x).array().exp().matrix();
  n.parents = {x.id_};
  return record(std::move(n));
}

Value Tape::weighted_sum(Value weights, std::span<const Value> vectors) {
  const Matrix& w = value(weights);
  require(!vectors.empty(), "weighted_sum", "no vectors");
  require(w.cols() == 1 && w.rows() == static_cast<Eigen::Index>(vectors.size()), "weighted_sum",
          "weights of shape " + shape(w) + " for " + std::to_string(vectors.size()) + " vectors");
  const Matrix& first = value(vectors[0]);
  Node n;
  n.op = Op::weighted_sum;
  n.value = Matrix::Zero(first.rows(), first.cols());
  n.parents.push_back(weights.id_);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const Matrix& v = value(vectors[i]);
    require(v.rows() == first.rows() && v.cols() == first.cols(), "weighted_sum",
            "mixed vector shapes " + shape(first) + " and " + shape(v));
    n.value += w(static_cast<Eigen::Index>(i), 0) * v;
    n.parents.push_back(vectors[i].id_);
  }
  return record(std::move(n));
}

Value Tape::normalize(Value x) {
  const Matrix& xm = value(x);
  require(xm.cols() == 1 && xm.rows() > 0, "normalize", "expects a non-empty column");
  const double total = xm.sum();
  require(total != 0.0, "normalize", "sum of inputs is zero");
  Node n;
  n.op = Op::normalize;
  n.value = xm / total;
  n.factor = total;
  n.parents = {x.id_};
  return record(std::move(n));
}

Value Tape::softmax_cross_entropy(Value logits, int gold) {
  const Matrix& z = value(logits);
  require(z.cols() == 1 && z.rows() >= 2, "softmax_xent", "logits must be a column of size >= 2");
  require(gold >= 0 && gold < z.rows(), "softmax_xent",
          "gold class " + std::to_string(gold) + " out of range");
  const double zmax = z.maxCoeff();
  Matrix shifted = (z.array() - zmax).exp().matrix();
  const double total = shifted.sum();
  Node n;
  n.op = Op::softmax_xent;
  n.cache = shifted / total;
  n.value = Matrix::Constant(1, 1, std::log(total) - (z(gold, 0) - zmax));
  n.gold = gold;
  n.parents = {logits.id_};
  return record(std::move(n));
}

Value Tape::squared_l2(std::span<Parameter* const> params) {
  Node n;
  n.op = Op::squared_l2;
  double total = 0.0;
  for (Parameter* p : params) {
    total += p->value.squaredNorm();
    n.parents.push_back(param(*p).id_);
  }
  n.value = Matrix::Constant(1, 1, total);
  return record(std::move(n));
}

Value Tape::scale(Value x, double factor) {
  Node n;
  n.op = Op::scale;
  n.value = value(x) * factor;
  n.factor = factor;
  n.parents = {x.id_};
  return record(std::move(n));
}

Value Tape::sum(Value x) {
  Node n;
  n.op = Op::sum;
  n.value = Matrix::Constant(1, 1, value(x).sum());
  n.parents = {x.id_};
  return record(std::move(n));
}

void Tape::accumulate(int id, const Matrix& delta) {
  Node& n = nodes_[id];
  // Leaf ops have no backward rule of their own; the fault hook scales what
  // they pass into the parameter gradient instead.
  const double fault = (faulty_ && *faulty_ == n.op) ? kFaultFactor : 1.0;
  if (n.op == Op::parameter) {
    n.param->grad += fault * delta;
    n.param->mark_all_rows();
    return;
  }
  if (n.op == Op::lookup) {
    n.param->grad.row(n.row) += fault * delta.transpose();
    n.param->mark_row(n.row);
  }
  if (n.adjoint.size() == 0)
    n.adjoint = delta;
  else
    n.adjoint += delta;
}

void Tape::propagate(int id) {
  // Copy out what is needed: accumulate() may touch other nodes only.
  const Node& n = nodes_[id];
  const double fault = (faulty_ && *faulty_ == n.op) ? kFaultFactor : 1.0;
  const Matrix dy = n.adjoint * fault;
  const Matrix& y = n.value;
  switch (n.op) {
    case Op::constant:
    case Op::parameter:
    case Op::lookup:
      break;
    case Op::matvec: {
      const Matrix& w = value_of(n.parents[0]);
      const Matrix& x = value_of(n.parents[1]);
      Matrix dw = dy * x.transpose();
      Matrix dx = w.transpose() * dy;
      accumulate(n.parents[0], dw);
      accumulate(n.parents[1], dx);
      break;
    }
    case Op::concat: {
      Eigen::Index at = 0;
      for (int p : n.parents) {
        const Eigen::Index rows = value_of(p).rows();
        accumulate(p, dy.middleRows(at, rows));
        at += rows;
      }
      break;
    }
    case Op::add:
      accumulate(n.parents[0], dy);
      accumulate(n.parents[1], dy);
      break;
    case Op::mul: {
      Matrix da = dy.cwiseProduct(value_of(n.parents[1]));
      Matrix db = dy.cwiseProduct(value_of(n.parents[0]));
      accumulate(n.parents[0], da);
      accumulate(n.parents[1], db);
      break;
    }
    case Op::sigmoid:
      accumulate(n.parents[0], dy.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
      break;
    case Op::tanh:
      accumulate(n.parents[0], dy.cwiseProduct((1.0 - y.array().square()).matrix()));
      break;
    case Op::exp:
      accumulate(n.parents[0], dy.cwiseProduct(y));
      break;
    case Op::weighted_sum: {
      const Matrix& w = value_of(n.parents[0]);
      Matrix dw(w.rows(), 1);
      for (std::size_t i = 1; i < n.parents.size(); ++i) {
        const Matrix& v = value_of(n.parents[i]);
        dw(static_cast<Eigen::Index>(i) - 1, 0) = v.cwiseProduct(dy).sum();
      }
      accumulate(n.parents[0], dw);
      for (std::size_t i = 1; i < n.parents.size(); ++i)
        accumulate(n.parents[i], dy * w(static_cast<Eigen::Index>(i) - 1, 0));
      break;
    }
    case Op::normalize: {
      const double inner = dy.cwiseProduct(y).sum();
      accumulate(n.parents[0], ((dy.array() - inner) / n.factor).matrix());
      break;
    }
    case Op::softmax_xent: {
      Matrix dz = n.cache;
      dz(n.gold, 0) -= 1.0;
      accumulate(n.parents[0], dz * dy(0, 0));
      break;
    }
    case Op::squared_l2:
      for (int p : n.parents) accumulate(p, 2.0 * dy(0, 0) * value_of(p));
      break;
    case Op::scale:
      accumulate(n.parents[0], dy * n.factor);
      break;
    case Op::sum: {
      const Matrix& x = value_of(n.parents[0]);
      accumulate(n.parents[0], Matrix::Constant(x.rows(), x.cols(), dy(0, 0)));
      break;
    }
  }
}

void Tape::backward(Value loss) {
  node_of(loss);
  if (value_of(loss.id_).size() != 1)
    throw GraphError("backward: loss of shape " + shape(value_of(loss.id_)) + " is not a scalar");
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[loss.id_].adjoint = Matrix::Ones(1, 1);
  for (int id = loss.id_; id >= 0; --id) {
    if (nodes_[id].adjoint.size() == 0 || nodes_[id].op == Op::parameter) continue;
    propagate(id);
  }
}

GradCheckReport grad_check(const ScalarFunction& f, std::span<Parameter* const> params,
                           double step, double tolerance, std::optional<Op> faulty_op) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.set_faulty_op(faulty_op);
    Value loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape tape;
    return f(tape).scalar();
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    Matrix analytic = p->grad;
    Matrix numeric(analytic.rows(), analytic.cols());
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      const double saved = p->value(k);
      p->value(k) = saved + step;
      const double up = evaluate();
      p->value(k) = saved - step;
      const double down = evaluate();
      p->value(k) = saved;
      numeric(k) = (up - down) / (2.0 * step);
    }
    GradCheckEntry e;
    e.name = p->name;
    const double diff = (analytic - numeric).norm();
    const double denom = analytic.norm() + numeric.norm();
    e.relative_error = diff / std::max(denom, kGradCheckFloor);
    e.max_abs_error = analytic.size() ? (analytic - numeric).cwiseAbs().maxCoeff() : 0.0;
    e.passed = e.relative_error <= tolerance;
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    report.passed = report.passed && e.passed;
    report.entries.push_back(std::move(e));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace treesent
