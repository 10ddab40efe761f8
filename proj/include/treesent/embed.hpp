#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "treesent/graph.hpp"
#include "treesent/lexicon.hpp"
#include "treesent/tree.hpp"

namespace treesent {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense token indices with the unknown-word token pinned at index 0.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  // Returns the index of `token`, inserting it if new.
  int add(const std::string& token);
  // Index of `token`, or kUnk.
  int index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  // FNV-1a over the token list; identifies the vocabulary in checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Training-corpus tokens in first-seen order, then tokens from dictionary
/// surfaces.
Vocabulary build_vocabulary(std::span<const ParseTree> trees,
                            const PolarDictionary* dict = nullptr);

/// V x d word vectors; each row is one vocabulary entry.
struct EmbeddingTable {
  Matrix vectors;
  // Rows copied from the pre-trained file.
  std::size_t pretrained_rows = 0;

  int dim() const { return static_cast<int>(vectors.cols()); }
  int rows() const { return static_cast<int>(vectors.rows()); }
};

constexpr double kEmbeddingInitRange = 0.05;

/// Reads "token v1 ... vd" lines (an optional leading "count dim" header is
/// skipped). Rows absent from the file, UNK included, are drawn uniformly
/// from [-0.05, 0.05] with `seed`. Tokens not in `vocab` are ignored.
EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, int dim,
                               std::uint64_t seed);
EmbeddingTable load_embeddings_file(const std::string& path, const Vocabulary& vocab, int dim,
                                    std::uint64_t seed);
EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed);

Vector lookup(const Vocabulary& vocab, const EmbeddingTable& table, std::string_view token);

}  // namespace treesent
