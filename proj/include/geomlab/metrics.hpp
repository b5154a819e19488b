#pragma once

#include <string>
#include <vector>

#include "geomlab/detector.hpp"
#include "geomlab/image.hpp"

namespace geomlab {

// Desk-scale feature extractor standing in for Inception features: a frozen
// seeded random projection of the pixels (24 dims) concatenated with 8x8
// average-pooled pixels (64 dims). The seed is baked into the implementation,
// so features are identical across runs for the artifact's lifetime.
class FeatureExtractor {
 public:
  static constexpr int kProjDims = 24;
  static constexpr int kPoolDims = 64;
  static constexpr int kDims = kProjDims + kPoolDims;

  static std::vector<double> features(const Image& img);
};

// Frechet distance between gaussian fits of two feature clouds:
// |mu1-mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}), matrix root via the symmetric
// eigendecomposition of C1^{1/2} C2 C1^{1/2} with eigenvalues clipped at 0.
// Both covariances get 1e-6 I shrinkage. Needs at least dim+1 samples a side.
double frechet_features(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b);

double frechet(const std::vector<Image>& a, const std::vector<Image>& b);

// Percentage of images with at least one template detection.
double icr(const std::vector<Image>& images, const TemplateDetector& det);

// Combined quality/erasure score, the product convention of Tables 2-3.
double fr_score(double fid, double icr_percent);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  int n = 0;
};

// Point-biserial Pearson correlation between two 0/1 flag vectors with a
// two-sided p-value from the t-distribution (n-2 dof).
PearsonResult pearson_study(const std::vector<int>& prompt_flags,
                            const std::vector<int>& presence_flags);

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;
};

// Bootstrap estimate of "at least one positive among group_size draws":
// resampled groups (with replacement) are split into batches; reports the
// mean and std of the per-batch positive-group fraction.
BootstrapResult bootstrap_expected_max(const std::vector<int>& flags, int group_size,
                                       int resamples, uint64_t seed, int batches = 20);

// One evaluation row; fr columns are derived, never stored.
struct MetricsRecord {
  std::string run_id;
  std::string setting;
  double fid = 0.0;
  double icr = 0.0;  // percent
  int n = 0;
  uint64_t seed = 0;
  std::string config_hash;

  double fr() const { return fid * icr; }  // raw product, ablation-table convention
  double fr_over_100() const { return fid * icr / 100.0; }
};

// Regularized incomplete beta (exposed for the t-distribution tests).
double ibeta(double a, double b, double x);

}  // namespace geomlab
