#pragma once

#include <cstdint>
#include <string>

#include "geomlab/common.hpp"

namespace geomlab {

// Flat key=value run configuration. Serialization is canonical (fixed key
// order), and the FNV-1a hash of that form stamps every output row.
struct RunConfig {
  // dataset
  std::string kind = "watermark";
  int n = 2000;
  int n_test = 500;
  double icr = 0.5;
  int image = 32;
  uint64_t seed = 1;

  // geometry / annotation
  int bin = 8;  // square bin side in pixels
  double alpha = 0.25;
  std::string reweight = "intent";  // none|intent|literal|confidence
  double threshold = 0.5;
  int cap = 0;  // ranked-bin cap; 0 = keep all covered bins
  bool concept_token = true;
  bool geometry = true;
  double oracle_sigma = 0.0;
  double oracle_fn = 0.0;
  std::string oracle_conf = "fixed";  // fixed|uniform
  double sigma_geo = 0.0;             // cell-index annotation noise

  // training
  std::string mode = "data-removal";  // baseline|data-removal|model-removal
  int steps = 2200;
  int batch = 8;
  double lr = 2e-3;
  int sched_steps = 200;

  // model
  int base_ch = 8;
  int emb_dim = 32;
  int time_dim = 32;
  int max_len = 64;

  // sampling / evaluation
  double guidance = 3.0;
  int sampler_steps = 50;
  std::string neg = "concept+uniform:8";
  int eval_count = 500;
  int trend_points = 0;

  // model removal
  std::string ckpt;  // contaminated checkpoint path base
  int pool_size = 600;
  int mr_steps = 400;
  double mr_lr = 1e-2;

  std::string out = "runs/out";

  static RunConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
  std::string hash() const;  // 16 hex chars
  void save(const std::string& path) const;
};

}  // namespace geomlab
