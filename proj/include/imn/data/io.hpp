#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "imn/data/dataset.hpp"

// On-disk record format:
//   <stem>.bin   C*L little-endian float32, row-major by lead (no header)
//   <stem>.json  {"id", "fs", "labels", "fold", "C", "L", optional "normalized", optional "notes"}
// A manifest lists records by blob path relative to the manifest's directory:
//   {"format_version": 1, "records": [{"id", "path", "fs", "labels", "fold", "L"}]}

namespace imn {

inline constexpr int kManifestFormatVersion = 1;

struct ManifestEntry {
  std::string id;
  std::string path;  // blob path, relative to the manifest directory
  double fs = 500.0;
  LabelSet labels;
  int fold = 0;
  std::size_t length = 0;
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::vector<ManifestEntry> records;
  std::filesystem::path base_dir;  // directory the manifest was read from
};

/// Sidecar path for a blob: same stem with a .json extension.
std::filesystem::path sidecar_path(const std::filesystem::path& blob);

void write_record(const EcgRecord& record, const std::filesystem::path& blob);
EcgRecord load_record(const std::filesystem::path& blob);

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every record of the manifest and checks it against its entry.
Dataset load_records(const DatasetManifest& manifest);

/// Writes records/<id>.bin + .json under `dir` and dir/manifest.json.
/// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace imn
