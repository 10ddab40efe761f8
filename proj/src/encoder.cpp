#include "treesent/encoder.hpp"

namespace treesent {

namespace {

Value affine(Tape& tape, Parameter& w, Parameter& b, Value x) {
  return tape.add(tape.matvec(tape.param(w), x), tape.param(b));
}

void check_rows(const Value& v, Eigen::Index rows, const char* what) {
  if (v.cols() != 1 || v.rows() != rows)
    throw ModelError(std::string(what) + ": expected a " + std::to_string(rows) +
                     "-vector, got " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
}

}  // namespace

CellState leaf_cell(Tape& tape, Value x, TreeLstmParams& p) {
  check_rows(x, p.leaf_input_w.value.cols(), "leaf_cell");
  Value i = tape.sigmoid(affine(tape, p.leaf_input_w, p.leaf_input_b, x));
  Value o = tape.sigmoid(affine(tape, p.leaf_output_w, p.leaf_output_b, x));
  Value u = tape.tanh(affine(tape, p.leaf_update_w, p.leaf_update_b, x));
  Value c = tape.mul(i, u);
  Value h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

CellState binary_cell(Tape& tape, const CellState& left, const CellState& right,
                      TreeLstmParams& p) {
  const Eigen::Index d = p.input_b.value.rows();
  check_rows(left.h, d, "binary_cell");
  check_rows(right.h, d, "binary_cell");
  check_rows(left.c, d, "binary_cell");
  check_rows(right.c, d, "binary_cell");
  const Value both[] = {left.h, right.h};
  Value children = tape.concat(both);
  Value i = tape.sigmoid(affine(tape, p.input_w, p.input_b, children));
  // Each child's forget gate is driven by the sibling's hidden state.
  Value f_left = tape.sigmoid(affine(tape, p.left_forget_w, p.left_forget_b, right.h));
  Value f_right = tape.sigmoid(affine(tape, p.right_forget_w, p.right_forget_b, left.h));
  Value o = tape.sigmoid(affine(tape, p.output_w, p.output_b, children));
  Value u = tape.tanh(affine(tape, p.update_w, p.update_b, children));
  Value c = tape.add(tape.add(tape.mul(i, u), tape.mul(f_left, left.c)),
                     tape.mul(f_right, right.c));
  Value h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

Value rvnn_leaf(Tape& tape, Value x, RvnnParams& p) {
  check_rows(x, p.leaf_w.value.cols(), "rvnn_leaf");
  return tape.tanh(affine(tape, p.leaf_w, p.leaf_b, x));
}

Value rvnn_cell(Tape& tape, Value left, Value right, RvnnParams& p) {
  const Eigen::Index d = p.compose_b.value.rows();
  check_rows(left, d, "rvnn_cell");
  check_rows(right, d, "rvnn_cell");
  const Value both[] = {left, right};
  return tape.tanh(affine(tape, p.compose_w, p.compose_b, tape.concat(both)));
}

EncodedTree encode_tree(Tape& tape, const ParseTree& tree, Model& model) {
  const bool lstm = model.config().encoder == EncoderKind::treelstm;
  EncodedTree out;
  out.h.resize(tree.size());
  if (lstm) out.c.resize(tree.size());
  for (NodeId id = 0; id < static_cast<NodeId>(tree.size()); ++id) {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      Value x = model.word(tape, n.token);
      if (lstm) {
        CellState s = leaf_cell(tape, x, model.lstm());
        out.h[id] = s.h;
        out.c[id] = s.c;
      } else {
        out.h[id] = rvnn_leaf(tape, x, model.rvnn());
      }
      continue;
    }
    if (n.children.size() != 2)
      throw ModelError("encode_tree: node " + std::to_string(id) + " has " +
                       std::to_string(n.children.size()) + " children; binarize first");
    const NodeId l = n.children[0];
    const NodeId r = n.children[1];
    if (lstm) {
      CellState s = binary_cell(tape, {out.h[l], out.c[l]}, {out.h[r], out.c[r]}, model.lstm());
      out.h[id] = s.h;
      out.c[id] = s.c;
    } else {
      out.h[id] = rvnn_cell(tape, out.h[l], out.h[r], model.rvnn());
    }
  }
  return out;
}

}  // namespace treesent
