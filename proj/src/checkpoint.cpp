#include "treesent/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace treesent {

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

void put_double(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const TrainingConfig& config, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::string blob;
  std::size_t count = 0;
  for (const Parameter* p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    for (Eigen::Index k = 0; k < p->value.size(); ++k) put_double(blob, p->value(k));
    count += static_cast<std::size_t>(p->value.size());
  }
  nlohmann::json manifest = {
      {"schema", kCheckpointSchema},
      {"config", to_json(config)},
      {"labels", info.label_scheme},
      {"seed", config.seed},
      {"epoch", info.epoch},
      {"dev_accuracy",
       info.dev_accuracy ? nlohmann::json(*info.dev_accuracy) : nlohmann::json(nullptr)},
      {"vocab", model.vocab().tokens()},
      {"vocab_hash", hex64(model.vocab().hash())},
      {"tensors", tensors},
      {"blob", kTensorFile},
      {"blob_doubles", count},
  };
  {
    std::ofstream out(dir / kManifestFile, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + (dir / kManifestFile).string());
    out << manifest.dump(2) << '\n';
  }
  std::ofstream out(dir / kTensorFile, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + (dir / kTensorFile).string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / kManifestFile));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("malformed manifest: " + std::string(e.what()));
  }
  try {
    if (manifest.at("schema") != kCheckpointSchema)
      throw CheckpointError("unsupported checkpoint schema " + manifest.at("schema").dump());
    TrainingConfig config = training_config_from_json(manifest.at("config"));
    CheckpointInfo info;
    info.label_scheme = manifest.at("labels").get<std::string>();
    info.epoch = manifest.at("epoch").get<int>();
    if (!manifest.at("dev_accuracy").is_null())
      info.dev_accuracy = manifest.at("dev_accuracy").get<double>();

    Vocabulary vocab(manifest.at("vocab").get<std::vector<std::string>>());
    if (hex64(vocab.hash()) != manifest.at("vocab_hash").get<std::string>())
      throw CheckpointError("vocabulary hash mismatch");

    const std::string blob = read_file(dir / manifest.at("blob").get<std::string>());
    const auto& tensors = manifest.at("tensors");
    std::size_t declared = 0;
    for (const auto& t : tensors)
      declared += t.at("rows").get<std::size_t>() * t.at("cols").get<std::size_t>();
    if (declared != manifest.at("blob_doubles").get<std::size_t>())
      throw CheckpointError("shape mismatch: tensor shapes declare " + std::to_string(declared) +
                            " values but manifest records " +
                            manifest.at("blob_doubles").dump());
    if (blob.size() != declared * 8)
      throw CheckpointError("shape mismatch: manifest declares " + std::to_string(declared) +
                            " doubles, blob holds " + std::to_string(blob.size()) + " bytes");

    Model model(config.model, vocab, Matrix::Zero(vocab.size(), config.model.word_dim),
                config.seed);
    auto params = model.parameters();
    if (params.size() != tensors.size())
      throw CheckpointError("shape mismatch: manifest lists " + std::to_string(tensors.size()) +
                            " tensors, model has " + std::to_string(params.size()));
    const char* at = blob.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      Parameter& p = *params[i];
      if (t.at("name").get<std::string>() != p.name ||
          t.at("rows").get<Eigen::Index>() != p.value.rows() ||
          t.at("cols").get<Eigen::Index>() != p.value.cols())
        throw CheckpointError("shape mismatch for tensor " + t.at("name").get<std::string>() +
                              ": manifest " + t.at("rows").dump() + "x" + t.at("cols").dump() +
                              ", model " + p.name + " " + std::to_string(p.value.rows()) + "x" +
                              std::to_string(p.value.cols()));
      for (Eigen::Index k = 0; k < p.value.size(); ++k, at += 8) p.value(k) = get_double(at);
    }
    return LoadedCheckpoint{config, info, std::move(model)};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest: " + std::string(e.what()));
  } catch (const EmbeddingError& e) {
    throw CheckpointError(std::string("bad vocabulary: ") + e.what());
  }
}

}  // namespace treesent
