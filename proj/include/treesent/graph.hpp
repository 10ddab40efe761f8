#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace treesent {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trainable tensor together with its gradient accumulator.
///
/// Row-sparse parameters (embedding tables) remember which rows received
/// gradient so optimizers can update only those rows.
struct Parameter {
  Parameter(std::string name, Matrix value, bool row_sparse = false);

  std::string name;
  Matrix value;
  Matrix grad;
  bool row_sparse = false;

  void zero_grad();
  void mark_row(Eigen::Index row);
  void mark_all_rows() { all_rows_touched_ = true; }
  // Sorted rows with pending gradient; every row for dense parameters.
  std::vector<Eigen::Index> touched_rows() const;

 private:
  std::vector<Eigen::Index> touched_;
  bool all_rows_touched_ = false;
};

enum class Op {
  constant,
  parameter,
  lookup,
  matvec,
  concat,
  add,
  mul,
  sigmoid,
  tanh,
  exp,
  weighted_sum,
  normalize,
  softmax_xent,
  squared_l2,
  scale,
  sum,
};

const char* op_name(Op op);
std::optional<Op> op_from_name(const std::string& name);

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid until the tape
/// is reset or destroyed.
class Value {
 public:
  Value() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run record of one computation. Build a fresh tape (or reset)
/// for every sentence.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Matrix v);
  // Each parameter appears on the tape at most once; repeated calls return
  // the same node.
  Value param(Parameter& p);
  // Row `row` of `table` as a column vector.
  Value lookup(Parameter& table, Eigen::Index row);

  Value matvec(Value w, Value x);
  Value concat(std::span<const Value> parts);
  Value add(Value a, Value b);
  Value mul(Value a, Value b);
  Value sigmoid(Value x);
  Value tanh(Value x);
  Value exp(Value x);
  // sum_i weights[i] * vectors[i]; `weights` is an n x 1 column.
  Value weighted_sum(Value weights, std::span<const Value> vectors);
  // x / sum(x)
  Value normalize(Value x);
  // -log softmax(logits)[gold], as a 1 x 1 value.
  Value softmax_cross_entropy(Value logits, int gold);
  // sum of squared entries over all given parameters.
  Value squared_l2(std::span<Parameter* const> params);
  Value scale(Value x, double factor);
  Value sum(Value x);

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// into Parameter::grad; intermediate adjoints are readable via adjoint().
  void backward(Value loss);

  const Matrix& value(const Value& v) const;
  const Matrix& adjoint(const Value& v) const;
  // Softmax probabilities cached by softmax_cross_entropy.
  const Matrix& probabilities(const Value& loss) const;

  std::size_t size() const { return nodes_.size(); }
  void reset();

  // Test hook: scales the backward rule of `op` by 1.1 so gradient checks
  // can be shown to catch a broken derivative.
  void set_faulty_op(std::optional<Op> op) { faulty_ = op; }

 private:
  struct Node {
    Op op = Op::constant;
    Matrix value;
    Matrix adjoint;
    Matrix cache;
    std::vector<int> parents;
    Parameter* param = nullptr;
    Eigen::Index row = 0;
    double factor = 0.0;
    int gold = 0;
  };

  Value record(Node node);
  const Node& node_of(const Value& v) const;
  const Matrix& value_of(int id) const;
  void accumulate(int id, const Matrix& delta);
  void propagate(int id);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  std::optional<Op> faulty_;
};

// Free-function spellings for model code.
inline Value operator+(Value a, Value b) { return a.tape()->add(a, b); }
inline Value hadamard(Value a, Value b) { return a.tape()->mul(a, b); }
inline Value matvec(Value w, Value x) { return w.tape()->matvec(w, x); }
inline Value sigmoid(Value x) { return x.tape()->sigmoid(x); }
inline Value tanh(Value x) { return x.tape()->tanh(x); }
inline Value exp(Value x) { return x.tape()->exp(x); }
inline Value concat(Value a, Value b) {
  const Value parts[] = {a, b};
  return a.tape()->concat(parts);
}

struct GradCheckEntry {
  std::string name;
  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-7) over the tensor.
  double relative_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = true;
};

using ScalarFunction = std::function<Value(Tape&)>;

/// Compares tape gradients of `f` with central differences for every entry
/// of every parameter in `params`. `f` must be deterministic and must
/// rebuild its computation on the tape it is given.
GradCheckReport grad_check(const ScalarFunction& f, std::span<Parameter* const> params,
                           double step = 1e-4, double tolerance = 1e-4,
                           std::optional<Op> faulty_op = std::nullopt);

}  // namespace treesent
