#include "imn/data/io.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "imn/tensor/serialize.hpp"

namespace imn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("unreadable JSON in '" + path.string() + "': " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

template <typename V>
V field(const json& obj, const char* key, const fs::path& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError("'" + where.string() + "': missing field '" + key + "'");
  try {
    return it->get<V>();
  } catch (const json::exception&) {
    throw DataError("'" + where.string() + "': field '" + key + "' has the wrong type");
  }
}

LabelSet parse_labels(const json& obj, const fs::path& where) {
  return LabelSet::parse(field<std::vector<std::string>>(obj, "labels", where));
}

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    throw DataError("record id '" + id + "' cannot be used as a file name");
  }
}

}  // namespace

fs::path sidecar_path(const fs::path& blob) {
  fs::path p = blob;
  p.replace_extension(".json");
  return p;
}

void write_record(const EcgRecord& record, const fs::path& blob) {
  record.validate();
  json side = {{"id", record.id},
               {"fs", record.fs},
               {"labels", record.labels.tokens()},
               {"fold", record.fold},
               {"C", record.num_leads()},
               {"L", record.length()}};
  if (record.normalized) side["normalized"] = true;
  if (!record.notes.empty()) side["notes"] = record.notes;

  std::ofstream out(blob, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + blob.string() + "'");
  write_f32_le(out, record.signal.data());
  if (!out) throw DataError("write failed for '" + blob.string() + "'");
  out.close();
  write_text_file(sidecar_path(blob), side.dump(2) + "\n");
}

EcgRecord load_record(const fs::path& blob) {
  const fs::path side_path = sidecar_path(blob);
  const json side = read_json_file(side_path);
  if (!side.is_object()) throw DataError("'" + side_path.string() + "': sidecar must be a JSON object");

  EcgRecord record;
  record.id = field<std::string>(side, "id", side_path);
  record.fs = field<double>(side, "fs", side_path);
  record.labels = parse_labels(side, side_path);
  record.fold = field<int>(side, "fold", side_path);
  const auto leads = field<std::size_t>(side, "C", side_path);
  const auto length = field<std::size_t>(side, "L", side_path);
  if (leads == 0 || length == 0) throw DataError("'" + side_path.string() + "': C and L must be positive");
  if (auto it = side.find("normalized"); it != side.end()) record.normalized = it->get<bool>();
  if (auto it = side.find("notes"); it != side.end()) record.notes = it->get<std::string>();

  std::error_code ec;
  const auto actual = fs::file_size(blob, ec);
  if (ec) throw DataError("cannot open '" + blob.string() + "'");
  const std::uintmax_t expected = 4ULL * leads * length;
  if (actual != expected) {
    throw DataError("'" + blob.string() + "': blob length mismatch, expected " + std::to_string(expected) +
                    " bytes (4*C*L) but found " + std::to_string(actual));
  }
  std::ifstream in(blob, std::ios::binary);
  if (!in) throw DataError("cannot open '" + blob.string() + "'");
  try {
    record.signal = Tensor<float>({leads, length}, read_f32_le(in, leads * length));
  } catch (const SerializationError& e) {
    throw DataError("'" + blob.string() + "': " + e.what());
  }
  record.validate();
  return record;
}

DatasetManifest load_manifest(const fs::path& path) {
  const json doc = read_json_file(path);
  if (!doc.is_object()) throw DataError("'" + path.string() + "': manifest must be a JSON object");
  DatasetManifest manifest;
  manifest.format_version = field<int>(doc, "format_version", path);
  if (manifest.format_version != kManifestFormatVersion) {
    throw DataError("'" + path.string() + "': unsupported manifest format_version " +
                    std::to_string(manifest.format_version));
  }
  manifest.base_dir = path.parent_path();
  const auto& records = doc.find("records");
  if (records == doc.end() || !records->is_array()) {
    throw DataError("'" + path.string() + "': 'records' must be an array");
  }
  std::set<std::string> seen;
  for (const auto& item : *records) {
    ManifestEntry e;
    e.id = field<std::string>(item, "id", path);
    e.path = field<std::string>(item, "path", path);
    e.fs = field<double>(item, "fs", path);
    e.labels = parse_labels(item, path);
    e.fold = field<int>(item, "fold", path);
    e.length = field<std::size_t>(item, "L", path);
    if (!seen.insert(e.id).second) throw DataError("'" + path.string() + "': duplicate record id '" + e.id + "'");
    manifest.records.push_back(std::move(e));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json records = json::array();
  for (const auto& e : manifest.records) {
    records.push_back({{"id", e.id},
                       {"path", e.path},
                       {"fs", e.fs},
                       {"labels", e.labels.tokens()},
                       {"fold", e.fold},
                       {"L", e.length}});
  }
  json doc = {{"format_version", manifest.format_version}, {"records", std::move(records)}};
  write_text_file(path, doc.dump(2) + "\n");
}

Dataset load_records(const DatasetManifest& manifest) {
  Dataset out;
  out.records.reserve(manifest.records.size());
  for (const auto& e : manifest.records) {
    const fs::path blob = manifest.base_dir / e.path;
    if (!fs::exists(blob)) throw DataError("record '" + e.id + "': blob '" + blob.string() + "' does not exist");
    EcgRecord r = load_record(blob);
    if (r.id != e.id) throw DataError("record '" + e.id + "': sidecar id is '" + r.id + "'");
    if (r.length() != e.length) {
      throw DataError("record '" + e.id + "': manifest L " + std::to_string(e.length) + " but sidecar L " +
                      std::to_string(r.length()));
    }
    if (r.fold != e.fold || !(r.labels == e.labels) || r.fs != e.fs) {
      throw DataError("record '" + e.id + "': manifest entry disagrees with its sidecar");
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "records");
  DatasetManifest manifest;
  std::set<std::string> seen;
  for (const auto& r : dataset.records) {
    check_id(r.id);
    if (!seen.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
    const std::string rel = "records/" + r.id + ".bin";
    write_record(r, dir / rel);
    manifest.records.push_back({r.id, rel, r.fs, r.labels, r.fold, r.length()});
  }
  const fs::path path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

}  // namespace imn
