#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace treesent {

using NodeId = int;

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps raw s-expression labels to class indices.
///
/// `fine5` accepts the SST labels 0..4 unchanged. `binary` accepts 0/1 as
/// well as the polarity tags N/P. The token "_" marks a node without a label
/// in either scheme.
struct LabelScheme {
  enum class Kind { binary, fine5 };

  Kind kind = Kind::fine5;
  // Drop every label below the root while parsing.
  bool sentence_only = false;

  static LabelScheme binary(bool sentence_only = false) { return {Kind::binary, sentence_only}; }
  static LabelScheme fine5(bool sentence_only = false) { return {Kind::fine5, sentence_only}; }
  static LabelScheme from_name(std::string_view name, bool sentence_only = false);

  int num_classes() const { return kind == Kind::binary ? 2 : 5; }
  std::string name() const { return kind == Kind::binary ? "binary" : "fine5"; }

  // Throws TreeError for a label that is neither "_" nor a member of the scheme.
  std::optional<int> parse(std::string_view raw) const;
  std::string format(std::optional<int> label) const;
};

struct Span {
  int begin = 0;
  int end = 0;

  int width() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct TreeNode {
  std::optional<int> label;
  std::string token;  // leaves only
  std::vector<NodeId> children;
  Span span;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const TreeNode&) const = default;
};

/// Constituency tree stored as a post-order arena: children always precede
/// their parent and the root is the last node.
class ParseTree {
 public:
  ParseTree() = default;
  // Validates the arena invariants and recomputes spans.
  explicit ParseTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(NodeId id) const;
  NodeId root() const { return static_cast<NodeId>(nodes_.size()) - 1; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::size_t num_leaves() const { return nodes_.empty() ? 0 : nodes_.back().span.end; }

  std::optional<NodeId> parent(NodeId id) const;
  // First node id of the subtree rooted at `id`; the subtree is the
  // contiguous id range [subtree_begin(id), id].
  NodeId subtree_begin(NodeId id) const;
  bool is_binary() const;

  // Returns a copy with one label replaced.
  ParseTree with_label(NodeId id, std::optional<int> label) const;
  ParseTree without_labels_below_root() const;

  bool operator==(const ParseTree& other) const { return nodes_ == other.nodes_; }

 private:
  std::vector<TreeNode> nodes_;
  std::vector<NodeId> parents_;
  std::vector<NodeId> subtree_begin_;
};

ParseTree parse_sexpr(std::string_view text, const LabelScheme& scheme);
std::string to_sexpr(const ParseTree& tree, const LabelScheme& scheme);

/// Left-branching binarization with unary-chain collapse.
ParseTree binarize(const ParseTree& tree);

std::vector<std::string> yield_tokens(const ParseTree& tree, NodeId node);
std::string yield_string(const ParseTree& tree, NodeId node);

/// Reads one tree per non-blank line. Errors name the 1-based line number.
std::vector<ParseTree> read_trees(std::istream& in, const LabelScheme& scheme,
                                  bool binarized = true);
std::vector<ParseTree> read_tree_file(const std::string& path, const LabelScheme& scheme,
                                      bool binarized = true);

}  // namespace treesent
