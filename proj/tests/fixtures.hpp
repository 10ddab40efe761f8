#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "treesent/embed.hpp"
#include "treesent/lexicon.hpp"
#include "treesent/model.hpp"
#include "treesent/train.hpp"
#include "treesent/tree.hpp"

namespace fixtures {

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> w = {
      "the",   "movie", "was",   "a",     "plot",  "actor", "film",  "story", "and",
      "but",   "very",  "not",   "quite", "scene", "ended", "began", "music", "long",
      "short", "funny", "dull",  "sharp", "calm",  "loud",  "fresh", "stale", "warm",
      "cold",  "bright", "dark",
  };
  return w;
}

// Random binary s-expression with `leaves` tokens; every node labeled with
// probability `label_prob`, the root always labeled.
inline std::string random_sexpr(std::mt19937_64& rng, int leaves, int num_classes,
                                double label_prob, const std::vector<std::string>& vocab,
                                bool is_root = true) {
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  std::bernoulli_distribution labeled(label_prob);
  auto label = [&] { return (is_root || labeled(rng)) ? std::to_string(cls(rng)) : "_"; };
  if (leaves == 1) {
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::string lab = label();
    return "(" + lab + " " + vocab[pick(rng)] + ")";
  }
  std::uniform_int_distribution<int> split(1, leaves - 1);
  const int left = split(rng);
  std::string lab = label();
  return "(" + lab + " " + random_sexpr(rng, left, num_classes, label_prob, vocab, false) + " " +
         random_sexpr(rng, leaves - left, num_classes, label_prob, vocab, false) + ")";
}

inline treesent::ParseTree random_tree(std::mt19937_64& rng, int leaves, int num_classes = 5,
                                       double label_prob = 0.0) {
  auto scheme = num_classes == 2 ? treesent::LabelScheme::binary() : treesent::LabelScheme::fine5();
  return treesent::binarize(
      treesent::parse_sexpr(random_sexpr(rng, leaves, num_classes, label_prob, words()), scheme));
}

// 20 sentences; class 1 iff the token "great" occurs, class 0 iff "awful"
// occurs. Exactly one marker per sentence.
inline std::vector<treesent::ParseTree> separable_corpus(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> filler(words().begin(), words().begin() + 12);
  std::vector<treesent::ParseTree> out;
  for (int s = 0; s < 20; ++s) {
    const int label = s % 2;
    std::uniform_int_distribution<int> len(3, 7);
    const int n = len(rng);
    std::vector<std::string> toks;
    std::uniform_int_distribution<std::size_t> pick(0, filler.size() - 1);
    for (int i = 0; i < n; ++i) toks.push_back(filler[pick(rng)]);
    std::uniform_int_distribution<int> pos(0, n - 1);
    toks[pos(rng)] = label ? "great" : "awful";
    // Random binary bracketing over the tokens.
    std::function<std::string(int, int, bool)> build = [&](int b, int e, bool root) {
      const std::string lab = root ? std::to_string(label) : "_";
      if (e - b == 1) return root ? "(" + lab + " " + toks[b] + ")" : toks[b];
      std::uniform_int_distribution<int> split(b + 1, e - 1);
      const int m = split(rng);
      return "(" + lab + " " + build(b, m, false) + " " + build(m, e, false) + ")";
    };
    out.push_back(treesent::binarize(
        treesent::parse_sexpr(build(0, n, true), treesent::LabelScheme::binary())));
  }
  return out;
}

inline treesent::PolarDictionary marker_dictionary() {
  treesent::PolarDictionary d(2);
  d.insert("great", 1);
  d.insert("awful", 0);
  return d;
}

inline treesent::Model make_model(const treesent::ModelConfig& cfg,
                                  const treesent::Vocabulary& vocab, std::uint64_t seed) {
  auto table = treesent::random_embeddings(vocab, cfg.word_dim, seed + 1000);
  return treesent::Model(cfg, vocab, table.vectors, seed);
}

inline treesent::Vocabulary vocab_of_words() {
  treesent::Vocabulary v;
  for (const auto& w : words()) v.add(w);
  return v;
}

// Shifts every parameter away from its structured initial values so that
// biases and forget offsets are generic.
inline void randomize(treesent::Model& model, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto* p : model.parameters())
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value(k) = u(rng);
}

inline oracle::LeafWeights leaf_weights(treesent::TreeLstmParams& p) {
  return {p.leaf_input_w.value, p.leaf_output_w.value, p.leaf_update_w.value,
          p.leaf_input_b.value.col(0), p.leaf_output_b.value.col(0), p.leaf_update_b.value.col(0)};
}

inline oracle::BinaryWeights binary_weights(treesent::TreeLstmParams& p) {
  return {p.input_w.value,        p.left_forget_w.value,  p.right_forget_w.value,
          p.output_w.value,       p.update_w.value,       p.input_b.value.col(0),
          p.left_forget_b.value.col(0), p.right_forget_b.value.col(0), p.output_b.value.col(0),
          p.update_b.value.col(0)};
}

inline oracle::AttentionWeights attention_weights(treesent::AttentionParams& p) {
  return {p.hidden_w.value, p.hidden_b.value.col(0), p.score_w.value, p.score_b.value(0, 0)};
}

}  // namespace fixtures
