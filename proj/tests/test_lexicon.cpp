#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "treesent/lexicon.hpp"

using namespace treesent;

namespace {
const LabelScheme kFine = LabelScheme::fine5();
const LabelScheme kBin = LabelScheme::binary();

PolarDictionary load(const std::string& text, const LabelScheme& scheme,
                     std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return load_dictionary(in, scheme, std::nullopt, warnings);
}
}  // namespace

TEST_CASE("load_dictionary maps polarity tags") {
  auto d = load("apprehension\tneg\nsplendid\tpos\n", kBin);
  CHECK(d.size() == 2);
  CHECK(d.find("apprehension") == 0);
  CHECK(d.find("splendid") == 1);
  CHECK_FALSE(d.find("neutral"));

  auto f = load("apprehension\tneg\nsplendid\tpos\n", kFine);
  CHECK(f.find("apprehension") == 1);
  CHECK(f.find("splendid") == 3);
  CHECK(f.counts() == std::vector<std::size_t>{0, 1, 0, 1, 0});
}

TEST_CASE("empty dictionary file") {
  auto d = load("", kBin);
  CHECK(d.empty());
  CHECK(d.counts() == std::vector<std::size_t>{0, 0});
}

TEST_CASE("duplicates keep the last polarity and warn") {
  std::vector<std::string> warnings;
  auto d = load("good\tpos\ngood\tneg\n", kBin, &warnings);
  CHECK(d.size() == 1);
  CHECK(d.find("good") == 0);
  CHECK(warnings.size() == 1);
  CHECK(d.counts() == std::vector<std::size_t>{1, 0});
}

TEST_CASE("comments, blank lines, multi-word surfaces") {
  auto d = load("# header\n\nnot good\tneg\n", kBin);
  CHECK(d.size() == 1);
  CHECK(d.find("not good") == 0);
}

TEST_CASE("malformed dictionary lines") {
  CHECK_THROWS_WITH_AS(load("good\n", kBin), doctest::Contains("line 1"), LexiconError);
  CHECK_THROWS_WITH_AS(load("ok\tpos\ngood\tmaybe\n", kBin), doctest::Contains("line 2"),
                       LexiconError);
}

TEST_CASE("annotate labels the matching leaf") {
  auto t = parse_sexpr("(1 (_ the) (_ apprehension))", kBin);
  PolarDictionary d(2);
  d.insert("apprehension", 0);
  auto a = annotate(t, d);
  CHECK(a.node(1).label == 0);
  CHECK_FALSE(a.node(0).label);
  CHECK(a.node(a.root()).label == 1);
  CHECK(collect_loss_nodes(a) == std::vector<NodeId>{2, 1});
}

TEST_CASE("annotate with an empty dictionary leaves the tree unchanged") {
  auto t = parse_sexpr("(1 (_ the) (_ apprehension))", kBin);
  CHECK(annotate(t, PolarDictionary(2)) == t);
  CHECK(collect_loss_nodes(t) == std::vector<NodeId>{t.root()});
}

TEST_CASE("corpus labels take precedence over dictionary labels") {
  auto t = parse_sexpr("(1 (_ (_ very) (_ bad)) (1 good))", kBin);
  PolarDictionary d(2);
  d.insert("very bad good", 0);  // full sentence
  d.insert("good", 0);           // already labeled leaf
  d.insert("very bad", 0);
  auto a = annotate(t, d);
  CHECK(a.node(a.root()).label == 1);
  CHECK(a.node(3).label == 1);
  CHECK(a.node(2).label == 0);
}

TEST_CASE("collect_loss_nodes requires a root label") {
  auto t = parse_sexpr("(_ (_ a) (1 b))", kBin);
  CHECK_THROWS_AS(collect_loss_nodes(t), TreeError);
}

TEST_CASE("oracle: annotate matches brute-force yield enumeration") {
  std::mt19937_64 rng(3);
  std::vector<ParseTree> corpus;
  for (int s = 0; s < 100; ++s) {
    std::uniform_int_distribution<int> len(1, 10);
    corpus.push_back(fixtures::random_tree(rng, len(rng), 2, 0.1));
  }
  // Dictionary of 50 surfaces: half sampled from real subtree yields, half
  // from random token pairs.
  std::vector<std::string> yields;
  for (const auto& t : corpus)
    for (const auto& y : oracle::all_yields(t)) yields.push_back(y);
  PolarDictionary dict(2);
  std::uniform_int_distribution<std::size_t> pick_y(0, yields.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_w(0, fixtures::words().size() - 1);
  std::bernoulli_distribution coin(0.5);
  while (dict.size() < 25) dict.insert(yields[pick_y(rng)], coin(rng));
  while (dict.size() < 50)
    dict.insert(fixtures::words()[pick_w(rng)] + " " + fixtures::words()[pick_w(rng)], coin(rng));

  int mismatches = 0;
  for (const auto& t : corpus) {
    auto a = annotate(t, dict);
    auto ys = oracle::all_yields(t);
    for (NodeId id = 0; id < static_cast<NodeId>(t.size()); ++id) {
      std::optional<int> expected = t.node(id).label;
      if (!expected && id != t.root()) {
        auto it = dict.entries().find(ys[id]);
        if (it != dict.entries().end()) expected = it->second;
      }
      if (a.node(id).label != expected) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}
