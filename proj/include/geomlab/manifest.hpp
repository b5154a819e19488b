#pragma once

#include <string>
#include <vector>

#include "geomlab/geometry.hpp"
#include "geomlab/image.hpp"

namespace geomlab {

struct ManifestRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  std::string caption;     // space-separated base-vocab tokens
  std::vector<Detection> boxes;
  std::string split;  // "train" | "test"
};

struct ManifestHeader {
  std::string name;
  std::string kind;  // concept kind
  double icr = 0.0;
  int n_train = 0;
  int n_test = 0;
  int stamped = 0;  // achieved stamped count
  int image_size = 0;
  uint64_t seed = 0;
};

// Line-delimited dataset: header.json sidecar + manifest.jsonl records.
struct Manifest {
  ManifestHeader header;
  std::vector<ManifestRecord> records;
  std::string dir;

  void save(const std::string& directory);
  static Manifest load(const std::string& directory);

  Image load_image(const ManifestRecord& rec) const;

  std::vector<const ManifestRecord*> split(const std::string& name) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == name) out.push_back(&r);
    return out;
  }
};

}  // namespace geomlab
