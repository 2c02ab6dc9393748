#pragma once

#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/data/dataset.hpp"
#include "dilhyfs/data/pgm.hpp"
#include "dilhyfs/util/fs.hpp"

namespace dilhyfs::data {

struct ManifestRow {
  std::string path;  // relative to the manifest's directory unless absolute
  std::size_t label = 0;
  Split split = Split::train;
};

/// One JSON object per line: {"class": <int>, "path": <string>, "split": "train"|"test"}.
inline std::string encode_manifest(const std::vector<ManifestRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j;
    j["path"] = r.path;
    j["class"] = r.label;
    j["split"] = std::string(split_name(r.split));
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ManifestRow> decode_manifest(const std::string& text) {
  std::vector<ManifestRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("manifest: ") + e.what(), at);
    }
    if (!j.is_object() || !j.contains("path") || !j.contains("class") || !j.contains("split") ||
        !j["path"].is_string() || !j["class"].is_number_unsigned() || !j["split"].is_string()) {
      throw FormatError("manifest: row needs string path, non-negative class and split", at);
    }
    rows.push_back({j["path"].get<std::string>(), j["class"].get<std::size_t>(),
                    parse_split(j["split"].get<std::string>())});
  }
  return rows;
}

/// Loads every image a manifest references. Classes must be 0..K-1 and each class must
/// appear in both splits.
inline Dataset load_manifest(const std::filesystem::path& manifest, std::size_t size,
                             const std::string& domain = "manifest") {
  const auto rows = decode_manifest(util::read_file(manifest));
  if (rows.empty()) throw DataError("manifest '" + manifest.string() + "' lists no samples");
  Dataset ds;
  ds.domain = domain;
  ds.image_size = size;
  for (const auto& r : rows) ds.num_classes = std::max(ds.num_classes, r.label + 1);
  std::vector<std::size_t> train(ds.num_classes, 0), test(ds.num_classes, 0);
  const auto base = manifest.parent_path();
  for (const auto& r : rows) {
    const std::filesystem::path rel(r.path);
    const std::filesystem::path p = rel.is_absolute() ? rel : base / rel;
    if (!std::filesystem::exists(p)) throw DataError("manifest: missing file '" + p.string() + "'");
    ds.samples.push_back({load_pgm(p, size), r.label, r.split, r.path});
    ++(r.split == Split::train ? train : test)[r.label];
  }
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    if (train[c] == 0 || test[c] == 0) {
      throw DataError("manifest: class " + std::to_string(c) + " is missing from the " +
                      (train[c] == 0 ? "train" : "test") + " split");
    }
  }
  return ds;
}

}  // namespace dilhyfs::data
