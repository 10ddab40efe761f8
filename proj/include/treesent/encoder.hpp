#pragma once

#include <vector>

#include "treesent/graph.hpp"
#include "treesent/model.hpp"
#include "treesent/tree.hpp"

namespace treesent {

struct CellState {
  Value h;
  Value c;  // empty for RvNN nodes
};

/// Per-node hidden (and, for Tree-LSTM, memory) states indexed by NodeId.
struct EncodedTree {
  std::vector<Value> h;
  std::vector<Value> c;

  std::size_t size() const { return h.size(); }
};

// i = sig(Wi x + bi), o = sig(Wo x + bo), u = tanh(Wu x + bu),
// c = i * u, h = o * tanh(c). No forget gates at leaves.
CellState leaf_cell(Tape& tape, Value x, TreeLstmParams& p);

CellState binary_cell(Tape& tape, const CellState& left, const CellState& right,
                      TreeLstmParams& p);

Value rvnn_leaf(Tape& tape, Value x, RvnnParams& p);
// tanh(W [h_l; h_r] + b)
Value rvnn_cell(Tape& tape, Value left, Value right, RvnnParams& p);

/// Bottom-up pass over a binarized tree; node ids are already post-order so
/// a single forward sweep suffices.
EncodedTree encode_tree(Tape& tape, const ParseTree& tree, Model& model);

}  // namespace treesent
