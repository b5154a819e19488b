#pragma once

#include <string>
#include <vector>

#include "geomlab/builder.hpp"
#include "geomlab/config.hpp"
#include "geomlab/diffusion.hpp"
#include "geomlab/metrics.hpp"

namespace geomlab {

// Negative-prompt spec: none | concept | concept+uniform:K | concept+random:K
struct NegSpec {
  bool concept_tok = false;
  bool geometry = false;
  NegStrategy strategy = NegStrategy::uniform;
  int count = 0;

  bool none() const { return !concept_tok && !geometry; }
  static NegSpec parse(const std::string& s);
};

// Dataset plus everything the training loop needs, annotated per the config's
// method flags (caption augmentation, weight maps, annotation noise).
struct PreparedData {
  Manifest manifest;
  Vocab vocab;
  BinGrid grid;
  std::vector<TrainItem> train_items;
  std::vector<Image> test_images;
  std::vector<std::vector<int>> test_tokens;  // plain captions, padded
  double mean_iou = 1.0;  // annotation IoU vs clean cells (sigma_geo study)
};

// Builds the dataset on disk if missing (cache keyed by dataset params) and
// prepares training items.
PreparedData prepare_data(const RunConfig& cfg, const std::string& data_root);

struct TrainedRun {
  RunConfig cfg;
  Denoiser<float> model;
  NoiseSchedule sched;
  PreparedData data;
};

// Trains one model per cfg; writes checkpoint, vocab, config and train log
// under run_dir.
TrainedRun train_run(const RunConfig& cfg, const std::string& run_dir,
                     const std::string& data_root);

// Generation with shared per-index seeds (rows of a sweep see identical
// initial noise). Prompts cycle through the clean test captions.
std::vector<Image> generate_images(TrainedRun& run, const NegSpec& neg, double guidance,
                                   int count);

MetricsRecord evaluate_images(const TrainedRun& run, const std::vector<Image>& gens,
                              const std::string& run_id, const std::string& setting);

// experiment families -------------------------------------------------------

struct PreliminaryOutcome {
  std::vector<MetricsRecord> rows;  // one per training-ICR level
  std::vector<double> train_icrs;
  double spearman = 0.0;
  PearsonResult correlation;  // prompt-word vs detected presence
};
PreliminaryOutcome run_preliminary(const RunConfig& cfg);

struct DataRemovalOutcome {
  std::vector<MetricsRecord> rows;  // baseline, concept-only, geom-erasing
};
DataRemovalOutcome run_data_removal(const RunConfig& cfg);

struct ModelRemovalOutcome {
  MetricsRecord contaminated;
  MetricsRecord removed;
  bool frozen_identical = false;
};
ModelRemovalOutcome run_model_removal(const RunConfig& cfg);

struct AblationOutcome {
  std::vector<MetricsRecord> rows;
  std::vector<double> iou_points;  // geo-accuracy suite only, parallel to rows
};
AblationOutcome run_ablations(const RunConfig& cfg, const std::string& suite);

void run_study(const RunConfig& cfg, const std::string& which);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace geomlab
