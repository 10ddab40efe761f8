#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "treesent/model.hpp"
#include "treesent/train.hpp"
#include "treesent/tree.hpp"

namespace treesent {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointSchema = "treesent.checkpoint/1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTensorFile = "params.bin";

struct CheckpointInfo {
  std::string label_scheme = "fine5";
  int epoch = 0;
  std::optional<double> dev_accuracy;
};

/// Writes `dir`/manifest.json and `dir`/params.bin. The blob is every
/// parameter in Model::parameters() order, column-major, little-endian
/// IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const TrainingConfig& config, const CheckpointInfo& info);

struct LoadedCheckpoint {
  TrainingConfig config;
  CheckpointInfo info;
  Model model;
};

/// Rebuilds the model and checks the blob against the manifest shapes and
/// the vocabulary hash.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace treesent
