#include "geomlab/csv.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace geomlab {

std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path);
  if (!os) throw IOError("csv: cannot write " + path);
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) os << ',';
    os << header[i];
  }
  os << '\n';
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << row[i];
    }
    os << '\n';
  }
  if (!os) throw IOError("csv: write failed " + path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records)
    rows.push_back({r.run_id, r.setting, csv_num(r.fid), csv_num(r.icr), csv_num(r.fr()),
                    csv_num(r.fr_over_100()), std::to_string(r.n), std::to_string(r.seed),
                    r.config_hash});
  write_csv(path, {"run_id", "setting", "fid", "icr", "fr", "fr_over_100", "n", "seed",
                   "config_hash"},
            rows);
}

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IOError("csv: cannot write " + path);
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["run_id"] = r.run_id;
    j["setting"] = r.setting;
    j["fid"] = csv_num(r.fid);
    j["icr"] = csv_num(r.icr);
    j["fr"] = csv_num(r.fr());
    j["fr_over_100"] = csv_num(r.fr_over_100());
    j["n"] = r.n;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    os << j.dump() << "\n";
  }
}

}  // namespace geomlab
