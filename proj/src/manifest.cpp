#include "geomlab/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace geomlab {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void Manifest::save(const std::string& directory) {
  dir = directory;
  fs::create_directories(directory);
  {
    ordered_json h;
    h["name"] = header.name;
    h["kind"] = header.kind;
    h["icr"] = header.icr;
    h["n_train"] = header.n_train;
    h["n_test"] = header.n_test;
    h["stamped"] = header.stamped;
    h["image_size"] = header.image_size;
    h["seed"] = header.seed;
    std::ofstream os(directory + "/header.json");
    if (!os) throw IOError("manifest: cannot write header in " + directory);
    os << h.dump(2) << "\n";
  }
  std::ofstream os(directory + "/manifest.jsonl");
  if (!os) throw IOError("manifest: cannot write manifest in " + directory);
  for (const auto& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["image_path"] = r.image_path;
    j["caption"] = r.caption;
    ordered_json boxes = ordered_json::array();
    for (const auto& b : r.boxes) {
      ordered_json bj;
      bj["p"] = b.p;
      bj["a1"] = b.a1;
      bj["b1"] = b.b1;
      bj["a2"] = b.a2;
      bj["b2"] = b.b2;
      boxes.push_back(bj);
    }
    j["boxes"] = boxes;
    j["split"] = r.split;
    os << j.dump() << "\n";
  }
  if (!os) throw IOError("manifest: write failed in " + directory);
}

Manifest Manifest::load(const std::string& directory) {
  Manifest m;
  m.dir = directory;
  {
    std::ifstream is(directory + "/header.json");
    if (!is) throw IOError("manifest: missing header.json in " + directory);
    ordered_json h = ordered_json::parse(is);
    m.header.name = h.at("name").get<std::string>();
    m.header.kind = h.at("kind").get<std::string>();
    m.header.icr = h.at("icr").get<double>();
    m.header.n_train = h.at("n_train").get<int>();
    m.header.n_test = h.at("n_test").get<int>();
    m.header.stamped = h.at("stamped").get<int>();
    m.header.image_size = h.at("image_size").get<int>();
    m.header.seed = h.at("seed").get<uint64_t>();
  }
  std::ifstream is(directory + "/manifest.jsonl");
  if (!is) throw IOError("manifest: missing manifest.jsonl in " + directory);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_path = j.at("image_path").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    for (const auto& bj : j.at("boxes")) {
      Detection d;
      d.p = bj.at("p").get<double>();
      d.a1 = bj.at("a1").get<double>();
      d.b1 = bj.at("b1").get<double>();
      d.a2 = bj.at("a2").get<double>();
      d.b2 = bj.at("b2").get<double>();
      r.boxes.push_back(d);
    }
    r.split = j.at("split").get<std::string>();
    m.records.push_back(std::move(r));
  }
  return m;
}

Image Manifest::load_image(const ManifestRecord& rec) const {
  return load_pgm(dir + "/" + rec.image_path);
}

}  // namespace geomlab
