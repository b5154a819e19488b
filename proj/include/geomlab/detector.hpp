#pragma once

#include <string>
#include <vector>

#include "geomlab/builder.hpp"
#include "geomlab/geometry.hpp"
#include "geomlab/image.hpp"
#include "geomlab/rng.hpp"

namespace geomlab {

// Ground-truth-backed oracle used as the training-time annotation source.
struct OracleConfig {
  enum class Confidence { fixed, uniform };  // fixed 1.0 | uniform(0.7, 1.0)
  Confidence conf_mode = Confidence::fixed;
  double sigma_px = 0.0;  // positional jitter, std-dev in pixels
  double fn_rate = 0.0;   // false-negative rate
};

std::vector<Detection> oracle_detect(const std::vector<Detection>& gt, int image_w, int image_h,
                                     const OracleConfig& cfg, Rng& rng);

// Independent evaluation-time judge: multi-scale normalized cross-correlation
// against the per-kind texture bank, sliding window stride 1, NMS.
class TemplateDetector {
 public:
  explicit TemplateDetector(ConceptKind kind, int image_size, double tau = 0.8);

  std::vector<Detection> detect(const Image& img) const;

  double tau() const { return tau_; }
  ConceptKind kind() const { return kind_; }

  // NCC of one template placed at (x0, y0); exposed for calibration tests.
  static double ncc(const Image& img, const Image& tmpl, int x0, int y0);

 private:
  struct Templ {
    int w = 0, h = 0;
    std::vector<float> centered;  // texture minus its mean
    double norm = 0.0;
  };
  ConceptKind kind_;
  double tau_;
  std::vector<Templ> bank_;
};

// Pixel-box IoU.
double box_iou(const Detection& a, const Detection& b);

// Greedy IoU matching of detections against ground truth.
struct MatchStats {
  int tp = 0, fp = 0, fn = 0;
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn); }
};
MatchStats match_detections(const std::vector<Detection>& dets, const std::vector<Detection>& gt,
                            double iou_thresh = 0.5);

// Line-delimited detection dump: {"image_id":..., "boxes":[{p,a1,b1,a2,b2}]}.
struct DetectionDump {
  std::string image_id;
  std::vector<Detection> boxes;
};
void save_detections(const std::vector<DetectionDump>& dumps, const std::string& path);
std::vector<DetectionDump> load_detections(const std::string& path);

}  // namespace geomlab
