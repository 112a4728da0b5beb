#include "imn/model/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "imn/tensor/serialize.hpp"

namespace imn {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const ImnConfig& c) {
  return json{{"num_leads", c.num_leads},
              {"signal_length", c.signal_length},
              {"num_outputs", c.num_outputs},
              {"lambda_l1", c.lambda_l1},
              {"encoder_channels", c.encoder_channels},
              {"encoder_kernel", {c.encoder_kernel_h, c.encoder_kernel_w}},
              {"decoder_kernel", {c.decoder_kernel_h, c.decoder_kernel_w}},
              {"pool_factor", c.pool_factor},
              {"variant", std::string(to_string(c.variant))},
              {"formulation", std::string(to_string(c.formulation()))}};
}

ImnConfig config_from_json(const json& doc) {
  ImnConfig c;
  try {
    c.num_leads = doc.at("num_leads").get<std::size_t>();
    c.signal_length = doc.at("signal_length").get<std::size_t>();
    c.num_outputs = doc.at("num_outputs").get<std::size_t>();
    c.lambda_l1 = doc.at("lambda_l1").get<double>();
    c.encoder_channels = doc.at("encoder_channels").get<std::array<std::size_t, 3>>();
    const auto ek = doc.at("encoder_kernel").get<std::array<std::size_t, 2>>();
    const auto dk = doc.at("decoder_kernel").get<std::array<std::size_t, 2>>();
    c.encoder_kernel_h = ek[0];
    c.encoder_kernel_w = ek[1];
    c.decoder_kernel_h = dk[0];
    c.decoder_kernel_w = dk[1];
    c.pool_factor = doc.at("pool_factor").get<std::size_t>();
    c.variant = parse_variant(doc.at("variant").get<std::string>());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed model config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("malformed model config: ") + e.what());
  }
  if (auto it = doc.find("formulation"); it != doc.end()) {
    if (!it->is_string() || it->get<std::string>() != to_string(c.formulation())) {
      throw CheckpointError("model config formulation disagrees with num_outputs");
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const ImnModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream blob(std::ios::binary);
  json tensors = json::array();
  model.visit_tensors([&](const std::string& name, const Tensor<float>& t, bool) {
    const auto offset = static_cast<std::size_t>(blob.tellp());
    write_tensor(blob, t);
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", serialized_size(t.shape())}});
  });
  json norms = json::array();
  model.visit_norms([&](const std::string& name, const BatchNormState<float>& s) {
    norms.push_back({{"name", name}, {"batches_tracked", s.batches_tracked}});
  });
  json manifest = {{"format", kCheckpointFormat},
                   {"format_version", kCheckpointFormatVersion},
                   {"config", config_to_json(model.config())},
                   {"tensors", std::move(tensors)},
                   {"batchnorm", std::move(norms)}};

  {
    std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + (dir / "tensors.bin").string() + "'");
    const std::string bytes = blob.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for '" + (dir / "tensors.bin").string() + "'");
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + (dir / "manifest.json").string() + "'");
  out << manifest.dump(2) << "\n";
  if (!out) throw CheckpointError("write failed for '" + (dir / "manifest.json").string() + "'");
}

ImnModel load_checkpoint(const fs::path& dir, std::optional<Formulation> expected) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream min(manifest_path);
  if (!min) throw CheckpointError("cannot open checkpoint manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    manifest = json::parse(min);
  } catch (const json::exception& e) {
    throw CheckpointError("cannot parse checkpoint manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", std::string()) != kCheckpointFormat) {
    throw CheckpointError("'" + manifest_path.string() + "' is not an imn checkpoint manifest");
  }
  const auto version = manifest.find("format_version");
  if (version == manifest.end() || !version->is_number_integer() || version->get<int>() != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + (version == manifest.end() ? "<missing>" : version->dump()) +
                          ", expected " + std::to_string(kCheckpointFormatVersion));
  }
  if (!manifest.contains("config")) throw CheckpointError("checkpoint manifest lacks 'config'");
  const ImnConfig config = config_from_json(manifest["config"]);
  if (expected && *expected != config.formulation()) {
    throw ModelMismatchError("checkpoint holds a " + std::string(to_string(config.formulation())) + " model (K=" +
                             std::to_string(config.num_outputs) + ") but a " + std::string(to_string(*expected)) +
                             " model was requested");
  }

  const fs::path blob_path = dir / "tensors.bin";
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw CheckpointError("cannot open '" + blob_path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  ImnModel model(config);
  const json& entries = manifest.value("tensors", json::array());
  std::size_t index = 0;
  model.visit_tensors([&](const std::string& name, Tensor<float>& t, bool) {
    if (index >= entries.size()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    const json& e = entries[index++];
    std::string stored_name;
    Shape shape;
    std::size_t offset = 0, size = 0;
    try {
      stored_name = e.at("name").get<std::string>();
      shape = e.at("shape").get<Shape>();
      offset = e.at("offset").get<std::size_t>();
      size = e.at("bytes").get<std::size_t>();
    } catch (const json::exception& ex) {
      throw CheckpointError("malformed tensor entry " + std::to_string(index - 1) + ": " + ex.what());
    }
    if (stored_name != name) throw CheckpointError("expected tensor '" + name + "' but found '" + stored_name + "'");
    if (shape != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(shape) + " in the manifest but the config implies " +
                            to_string(t.shape()));
    }
    if (size != serialized_size(shape)) throw CheckpointError("tensor '" + name + "' has an inconsistent byte count");
    if (offset > bytes.size() || bytes.size() - offset < size) {
      throw CheckpointError("tensor blob truncated: '" + name + "' needs bytes [" + std::to_string(offset) + ", " +
                            std::to_string(offset + size) + ") but the blob has " + std::to_string(bytes.size()));
    }
    std::istringstream in(bytes.substr(offset, size), std::ios::binary);
    Tensor<float> loaded;
    try {
      loaded = read_tensor(in);
    } catch (const SerializationError& ex) {
      throw CheckpointError("tensor '" + name + "': " + ex.what());
    }
    if (loaded.shape() != t.shape()) {
      throw CheckpointError("tensor '" + name + "' header shape " + to_string(loaded.shape()) + " disagrees with " +
                            to_string(t.shape()));
    }
    t = std::move(loaded);
  });
  if (index != entries.size()) throw CheckpointError("checkpoint lists unexpected extra tensors");

  const json& norms = manifest.value("batchnorm", json::array());
  std::size_t norm_index = 0;
  model.visit_norms([&](const std::string& name, BatchNormState<float>& s) {
    if (norm_index >= norms.size()) throw CheckpointError("checkpoint is missing batch-norm state '" + name + "'");
    const json& e = norms[norm_index++];
    if (e.value("name", std::string()) != name) throw CheckpointError("batch-norm state order mismatch at '" + name + "'");
    s.batches_tracked = e.value("batches_tracked", std::int64_t{0});
  });
  return model;
}

}  // namespace imn
