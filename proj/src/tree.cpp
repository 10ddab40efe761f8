#include "treesent/tree.hpp"

#include <charconv>
#include <fstream>

namespace treesent {

namespace {

constexpr std::string_view kNoLabel = "_";

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < text.size()) {
    char ch = text[i];
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      ++i;
    } else if (ch == '(' || ch == ')') {
      toks.push_back(text.substr(i, 1));
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '(' && text[j] != ')' && text[j] != ' ' &&
             text[j] != '\t' && text[j] != '\n' && text[j] != '\r')
        ++j;
      toks.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return toks;
}

struct RawNode {
  std::optional<int> label;
  std::string token;
  std::vector<RawNode> children;
};

class SexprReader {
 public:
  SexprReader(std::vector<std::string_view> toks, const LabelScheme& scheme)
      : toks_(std::move(toks)), scheme_(scheme) {}

  std::vector<TreeNode> read() {
    if (toks_.empty()) throw TreeError("empty input");
    if (toks_[0] != "(") throw TreeError("expected '(' at start of tree");
    ++pos_;
    RawNode root = read_group();
    if (pos_ != toks_.size()) {
      if (toks_[pos_] == ")") throw TreeError("unbalanced parentheses: extra ')'");
      throw TreeError("trailing tokens after tree");
    }
    std::vector<TreeNode> nodes;
    flatten(root, nodes);
    return nodes;
  }

 private:
  std::string_view next() {
    if (pos_ >= toks_.size()) throw TreeError("unbalanced parentheses: missing ')'");
    return toks_[pos_++];
  }

  // Called after consuming '('.
  RawNode read_group() {
    std::string_view head = next();
    if (head == ")") throw TreeError("empty group");
    if (head == "(") throw TreeError("missing label at start of group");
    RawNode node;
    node.label = scheme_.parse(head);
    for (;;) {
      std::string_view tok = next();
      if (tok == ")") break;
      if (tok == "(") {
        node.children.push_back(read_group());
      } else {
        RawNode leaf;
        leaf.token = std::string(tok);
        node.children.push_back(std::move(leaf));
      }
    }
    if (node.children.empty()) throw TreeError("group has a label but no content");
    // "(2 word)" is one labeled leaf, not a unary node over a bare token.
    if (node.children.size() == 1 && node.children[0].children.empty() &&
        !node.children[0].token.empty() && !node.children[0].label) {
      node.token = std::move(node.children[0].token);
      node.children.clear();
    }
    return node;
  }

  static NodeId flatten(const RawNode& raw, std::vector<TreeNode>& out) {
    TreeNode node;
    node.label = raw.label;
    node.token = raw.token;
    for (const auto& c : raw.children) node.children.push_back(flatten(c, out));
    out.push_back(std::move(node));
    return static_cast<NodeId>(out.size()) - 1;
  }

  std::vector<std::string_view> toks_;
  const LabelScheme& scheme_;
  std::size_t pos_ = 0;
};

void write_sexpr(const ParseTree& tree, const LabelScheme& scheme, NodeId id, bool is_root,
                 std::string& out) {
  const TreeNode& n = tree.node(id);
  if (n.is_leaf()) {
    if (!n.label && !is_root) {
      out += n.token;
      return;
    }
    out += '(';
    out += scheme.format(n.label);
    out += ' ';
    out += n.token;
    out += ')';
    return;
  }
  out += '(';
  out += scheme.format(n.label);
  for (NodeId c : n.children) {
    out += ' ';
    write_sexpr(tree, scheme, c, false, out);
  }
  out += ')';
}

class Binarizer {
 public:
  explicit Binarizer(const ParseTree& src) : src_(src) {}

  std::vector<TreeNode> run() {
    build(src_.root());
    return std::move(out_);
  }

 private:
  NodeId build(NodeId id) {
    const TreeNode* n = &src_.node(id);
    std::optional<int> label = n->label;
    while (n->children.size() == 1) {
      n = &src_.node(n->children.front());
      if (!label) label = n->label;
    }
    if (n->is_leaf()) {
      TreeNode leaf;
      leaf.label = label;
      leaf.token = n->token;
      return push(std::move(leaf));
    }
    NodeId acc = build(n->children[0]);
    for (std::size_t k = 1; k < n->children.size(); ++k) {
      NodeId rhs = build(n->children[k]);
      TreeNode inner;
      inner.children = {acc, rhs};
      if (k + 1 == n->children.size()) inner.label = label;
      acc = push(std::move(inner));
    }
    return acc;
  }

  NodeId push(TreeNode node) {
    out_.push_back(std::move(node));
    return static_cast<NodeId>(out_.size()) - 1;
  }

  const ParseTree& src_;
  std::vector<TreeNode> out_;
};

}  // namespace

LabelScheme LabelScheme::from_name(std::string_view name, bool sentence_only) {
  if (name == "binary") return binary(sentence_only);
  if (name == "fine5") return fine5(sentence_only);
  throw TreeError("unknown label scheme '" + std::string(name) + "' (expected binary or fine5)");
}

std::optional<int> LabelScheme::parse(std::string_view raw) const {
  if (raw == kNoLabel) return std::nullopt;
  if (kind == Kind::binary) {
    if (raw == "N") return 0;
    if (raw == "P") return 1;
  }
  int value = 0;
  if (!parse_int(raw, value))
    throw TreeError("non-numeric label '" + std::string(raw) + "' for scheme " + name());
  if (value < 0 || value >= num_classes())
    throw TreeError("label " + std::string(raw) + " outside range of scheme " + name());
  return value;
}

std::string LabelScheme::format(std::optional<int> label) const {
  return label ? std::to_string(*label) : std::string(kNoLabel);
}

ParseTree::ParseTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw TreeError("tree has no nodes");
  const auto n = static_cast<NodeId>(nodes_.size());
  parents_.assign(n, -1);
  subtree_begin_.assign(n, 0);
  int next_leaf = 0;
  for (NodeId id = 0; id < n; ++id) {
    TreeNode& node = nodes_[id];
    if (node.is_leaf()) {
      if (node.token.empty()) throw TreeError("leaf " + std::to_string(id) + " has no token");
      node.span = {next_leaf, next_leaf + 1};
      ++next_leaf;
      subtree_begin_[id] = id;
      continue;
    }
    if (!node.token.empty())
      throw TreeError("internal node " + std::to_string(id) + " carries a token");
    NodeId expected_begin = -1;
    for (std::size_t k = 0; k < node.children.size(); ++k) {
      NodeId c = node.children[k];
      if (c < 0 || c >= id) throw TreeError("child id does not precede its parent");
      if (parents_[c] != -1) throw TreeError("node " + std::to_string(c) + " has two parents");
      parents_[c] = id;
      if (k > 0 && subtree_begin_[c] != node.children[k - 1] + 1)
        throw TreeError("arena is not in post-order");
      if (k == 0) expected_begin = subtree_begin_[c];
    }
    if (node.children.back() != id - 1) throw TreeError("arena is not in post-order");
    subtree_begin_[id] = expected_begin;
    node.span = {nodes_[node.children.front()].span.begin, nodes_[node.children.back()].span.end};
  }
  for (NodeId id = 0; id + 1 < n; ++id)
    if (parents_[id] == -1) throw TreeError("node " + std::to_string(id) + " is detached");
  if (subtree_begin_[n - 1] != 0) throw TreeError("tree has more than one root");
}

const TreeNode& ParseTree::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw TreeError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

std::optional<NodeId> ParseTree::parent(NodeId id) const {
  node(id);
  if (parents_[id] < 0) return std::nullopt;
  return parents_[id];
}

NodeId ParseTree::subtree_begin(NodeId id) const {
  node(id);
  return subtree_begin_[id];
}

bool ParseTree::is_binary() const {
  for (const auto& n : nodes_)
    if (!n.is_leaf() && n.children.size() != 2) return false;
  return true;
}

ParseTree ParseTree::with_label(NodeId id, std::optional<int> label) const {
  node(id);
  ParseTree copy = *this;
  copy.nodes_[id].label = label;
  return copy;
}

ParseTree ParseTree::without_labels_below_root() const {
  ParseTree copy = *this;
  for (std::size_t i = 0; i + 1 < copy.nodes_.size(); ++i) copy.nodes_[i].label.reset();
  return copy;
}

ParseTree parse_sexpr(std::string_view text, const LabelScheme& scheme) {
  SexprReader reader(tokenize(text), scheme);
  ParseTree tree(reader.read());
  if (scheme.sentence_only) return tree.without_labels_below_root();
  return tree;
}

std::string to_sexpr(const ParseTree& tree, const LabelScheme& scheme) {
  std::string out;
  write_sexpr(tree, scheme, tree.root(), true, out);
  return out;
}

ParseTree binarize(const ParseTree& tree) { return ParseTree(Binarizer(tree).run()); }

std::vector<std::string> yield_tokens(const ParseTree& tree, NodeId node) {
  std::vector<std::string> out;
  for (NodeId id = tree.subtree_begin(node); id <= node; ++id)
    if (tree.node(id).is_leaf()) out.push_back(tree.node(id).token);
  return out;
}

std::string yield_string(const ParseTree& tree, NodeId node) {
  std::string out;
  for (NodeId id = tree.subtree_begin(node); id <= node; ++id) {
    const TreeNode& n = tree.node(id);
    if (!n.is_leaf()) continue;
    if (!out.empty()) out += ' ';
    out += n.token;
  }
  return out;
}

std::vector<ParseTree> read_trees(std::istream& in, const LabelScheme& scheme, bool binarized) {
  std::vector<ParseTree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ParseTree t = parse_sexpr(line, scheme);
      trees.push_back(binarized ? binarize(t) : std::move(t));
    } catch (const TreeError& e) {
      throw TreeError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trees;
}

std::vector<ParseTree> read_tree_file(const std::string& path, const LabelScheme& scheme,
                                      bool binarized) {
  std::ifstream in(path);
  if (!in) throw TreeError("cannot open tree file " + path);
  try {
    return read_trees(in, scheme, binarized);
  } catch (const TreeError& e) {
    throw TreeError(path + ": " + e.what());
  }
}

}  // namespace treesent
