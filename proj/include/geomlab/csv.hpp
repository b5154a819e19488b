#pragma once

#include <string>
#include <vector>

#include "geomlab/metrics.hpp"

namespace geomlab {

// Fixed-format float cell: six decimals, reproducible byte-for-byte.
std::string csv_num(double v);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Standard metrics table: run_id,setting,fid,icr,fr,fr_over_100,n,seed,config_hash
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

// JSON-lines mirror of the same records.
void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& records);

}  // namespace geomlab
