#include "treesent/lexicon.hpp"

#include <fstream>

namespace treesent {

PolarityMapping PolarityMapping::defaults_for(const LabelScheme& scheme) {
  if (scheme.kind == LabelScheme::Kind::fine5) return {3, 1};
  return {1, 0};
}

bool PolarDictionary::insert(const std::string& surface, int polarity) {
  if (polarity < 0 || polarity >= static_cast<int>(counts_.size()))
    throw LexiconError("polarity class " + std::to_string(polarity) + " out of range");
  auto [it, inserted] = entries_.try_emplace(surface, polarity);
  if (!inserted) {
    --counts_[it->second];
    it->second = polarity;
  }
  ++counts_[polarity];
  return !inserted;
}

std::optional<int> PolarDictionary::find(const std::string& surface) const {
  auto it = entries_.find(surface);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

PolarDictionary load_dictionary(std::istream& in, const LabelScheme& scheme,
                                std::optional<PolarityMapping> mapping,
                                std::vector<std::string>* warnings) {
  const PolarityMapping map = mapping.value_or(PolarityMapping::defaults_for(scheme));
  PolarDictionary dict(scheme.num_classes());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto where = [&] { return "dictionary line " + std::to_string(lineno) + ": "; };
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos)
      throw LexiconError(where() + "expected 'surface<TAB>pos|neg'");
    std::string surface = line.substr(0, tab);
    std::string tag = line.substr(tab + 1);
    int polarity;
    if (tag == "pos")
      polarity = map.positive;
    else if (tag == "neg")
      polarity = map.negative;
    else
      throw LexiconError(where() + "unknown polarity tag '" + tag + "'");
    if (dict.insert(surface, polarity) && warnings)
      warnings->push_back(where() + "duplicate surface '" + surface + "', keeping last");
  }
  return dict;
}

PolarDictionary load_dictionary_file(const std::string& path, const LabelScheme& scheme,
                                     std::optional<PolarityMapping> mapping,
                                     std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw LexiconError("cannot open dictionary " + path);
  return load_dictionary(in, scheme, mapping, warnings);
}

ParseTree annotate(const ParseTree& tree, const PolarDictionary& dict) {
  if (dict.empty()) return tree;
  std::vector<TreeNode> nodes = tree.nodes();
  // Yields are built bottom-up; the post-order arena guarantees children
  // are finished before their parent.
  std::vector<std::string> yields(nodes.size());
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    TreeNode& n = nodes[id];
    if (n.is_leaf()) {
      yields[id] = n.token;
    } else {
      for (NodeId c : n.children) {
        if (!yields[id].empty()) yields[id] += ' ';
        yields[id] += yields[c];
      }
    }
    if (id + 1 == nodes.size() || n.label) continue;
    if (auto polarity = dict.find(yields[id])) n.label = *polarity;
  }
  return ParseTree(std::move(nodes));
}

std::vector<NodeId> collect_loss_nodes(const ParseTree& tree) {
  const NodeId root = tree.root();
  if (tree.empty() || !tree.node(root).label) throw TreeError("tree root has no label");
  std::vector<NodeId> out{root};
  for (NodeId id = 0; id < root; ++id)
    if (tree.node(id).label) out.push_back(id);
  return out;
}

}  // namespace treesent
