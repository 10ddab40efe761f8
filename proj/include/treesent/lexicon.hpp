#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treesent/tree.hpp"

namespace treesent {

class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Class indices that the "pos"/"neg" dictionary tags map to.
struct PolarityMapping {
  int positive = 1;
  int negative = 0;

  // pos -> 1, neg -> 0 for binary; pos -> 3, neg -> 1 for fine5.
  static PolarityMapping defaults_for(const LabelScheme& scheme);
};

/// Surface string (space-joined tokens) to polarity class.
class PolarDictionary {
 public:
  PolarDictionary() = default;
  explicit PolarDictionary(int num_classes) : counts_(num_classes, 0) {}

  // Inserts or overwrites; returns true when `surface` was already present.
  bool insert(const std::string& surface, int polarity);
  std::optional<int> find(const std::string& surface) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, int>& entries() const { return entries_; }
  // Number of entries per class index.
  const std::vector<std::size_t>& counts() const { return counts_; }

 private:
  std::map<std::string, int> entries_;
  std::vector<std::size_t> counts_;
};

/// Reads "surface<TAB>pos|neg" lines; '#' lines and blank lines are skipped.
/// Duplicate surfaces keep the last polarity and append a warning.
PolarDictionary load_dictionary(std::istream& in, const LabelScheme& scheme,
                                std::optional<PolarityMapping> mapping = std::nullopt,
                                std::vector<std::string>* warnings = nullptr);
PolarDictionary load_dictionary_file(const std::string& path, const LabelScheme& scheme,
                                     std::optional<PolarityMapping> mapping = std::nullopt,
                                     std::vector<std::string>* warnings = nullptr);

/// Labels every unlabeled non-root node whose exact yield is a dictionary
/// surface. Existing labels, including the root's, are never overwritten.
ParseTree annotate(const ParseTree& tree, const PolarDictionary& dict);

/// Labeled nodes that contribute a loss term: the root first, then the
/// remaining labeled nodes in post-order. Throws if the root is unlabeled.
std::vector<NodeId> collect_loss_nodes(const ParseTree& tree);

}  // namespace treesent
