#include "treesent/embed.hpp"

#include <charconv>
#include <fstream>
#include <random>

namespace treesent {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Vocabulary::Vocabulary() { add(std::string(kUnkToken)); }

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  if (tokens.empty() || tokens.front() != kUnkToken)
    throw EmbeddingError("vocabulary must start with " + std::string(kUnkToken));
  for (const auto& t : tokens) {
    if (index_.contains(t)) throw EmbeddingError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix(0);
  }
  return h;
}

Vocabulary build_vocabulary(std::span<const ParseTree> trees, const PolarDictionary* dict) {
  Vocabulary vocab;
  for (const auto& tree : trees)
    for (const auto& n : tree.nodes())
      if (n.is_leaf()) vocab.add(n.token);
  if (dict) {
    for (const auto& [surface, polarity] : dict->entries()) {
      for (auto tok : split_ws(surface)) vocab.add(std::string(tok));
    }
  }
  return vocab;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed) {
  if (dim <= 0) throw EmbeddingError("embedding dimension must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  EmbeddingTable table;
  table.vectors.resize(vocab.size(), dim);
  for (int r = 0; r < vocab.size(); ++r)
    for (int c = 0; c < dim; ++c) table.vectors(r, c) = uniform(rng);
  return table;
}

EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, int dim,
                               std::uint64_t seed) {
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      long count = 0, declared = 0;
      if (parse_number(fields[0], count) && parse_number(fields[1], declared)) {
        if (declared != dim)
          throw EmbeddingError("embedding header declares dimension " + std::to_string(declared) +
                               ", expected " + std::to_string(dim));
        continue;
      }
    }
    auto where = [&] { return "embeddings line " + std::to_string(lineno) + ": "; };
    if (static_cast<int>(fields.size()) - 1 != dim)
      throw EmbeddingError(where() + "dimension mismatch: got " +
                           std::to_string(fields.size() - 1) + " components, expected " +
                           std::to_string(dim));
    Vector row(dim);
    for (int c = 0; c < dim; ++c) {
      if (!parse_number(fields[c + 1], row(c)))
        throw EmbeddingError(where() + "non-numeric component '" + std::string(fields[c + 1]) +
                             "'");
    }
    if (!vocab.contains(fields[0])) continue;
    const int idx = vocab.index(fields[0]);
    table.vectors.row(idx) = row.transpose();
    if (!seen[idx]) {
      seen[idx] = true;
      ++table.pretrained_rows;
    }
  }
  return table;
}

EmbeddingTable load_embeddings_file(const std::string& path, const Vocabulary& vocab, int dim,
                                    std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open embeddings " + path);
  return load_embeddings(in, vocab, dim, seed);
}

Vector lookup(const Vocabulary& vocab, const EmbeddingTable& table, std::string_view token) {
  return table.vectors.row(vocab.index(token)).transpose();
}

}  // namespace treesent
