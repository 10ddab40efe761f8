#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "treesent/graph.hpp"
#include "treesent/model.hpp"

namespace treesent {

/// One named finite-difference comparison inside a suite run.
struct GradCheckCase {
  std::string name;
  GradCheckReport report;
  double tolerance = 0.0;
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 1;
  // Whole-model instances (random trees of 2..9 leaves).
  int model_instances = 20;
  int hidden_dim = 8;
  int attention_dim = 8;
  double weight_decay = 1e-4;
  double op_tolerance = 1e-6;
  double model_tolerance = 1e-4;
  std::optional<Op> faulty_op;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckCase> cases;
  bool passed() const;
  double max_relative_error() const;
};

/// Single-op checks for every differentiable op, then full sentence
/// objectives (Tree-LSTM, concat attention, one dictionary-labeled node,
/// L2 term) on seeded random trees.
GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options);

/// Objective of one whole-model instance: summed cross-entropy over the
/// root and one dictionary-labeled node plus (lambda/2)||theta||^2.
GradCheckCase model_gradcheck_instance(std::uint64_t seed, EncoderKind encoder,
                                       ClassifierMode mode, const GradCheckSuiteOptions& options);

nlohmann::json to_json(const GradCheckCase& c);

}  // namespace treesent
