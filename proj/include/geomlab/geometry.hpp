#pragma once

#include <vector>

#include "geomlab/common.hpp"
#include "geomlab/rng.hpp"
#include "geomlab/vocab.hpp"

namespace geomlab {

// Partition of a W x H image into (W/W_bin) x (H/H_bin) cells.
struct BinGrid {
  int image_w = 0, image_h = 0;
  int bin_w = 0, bin_h = 0;

  BinGrid() = default;
  BinGrid(int iw, int ih, int bw, int bh) : image_w(iw), image_h(ih), bin_w(bw), bin_h(bh) {
    if (iw <= 0 || ih <= 0 || bw <= 0 || bh <= 0)
      throw ConfigError("bin grid: dimensions must be positive");
    if (iw % bw != 0 || ih % bh != 0)
      throw ConfigError(strformat("bin grid: image %dx%d not divisible by bin %dx%d", iw, ih, bw, bh));
  }

  int grid_w() const { return image_w / bin_w; }
  int grid_h() const { return image_h / bin_h; }
  int total() const { return grid_w() * grid_h(); }
};

// Detector output: confidence and a pixel box, (a1,b1) upper-left, (a2,b2)
// bottom-right, end-exclusive.
struct Detection {
  double p = 1.0;
  double a1 = 0, b1 = 0, a2 = 0, b2 = 0;
};

// Cell-index rectangle, half-open: covered cells are m in [a1,a2), n in [b1,b2).
struct BinBox {
  int a1 = 0, b1 = 0, a2 = 0, b2 = 0;
  int cells() const { return (a2 - a1) * (b2 - b1); }
};

struct Cell {
  int m = 0, n = 0;
  bool operator==(const Cell& o) const { return m == o.m && n == o.n; }
};

// Row-major ordering: n (row) outer, m (column) inner.
inline bool cell_less(const Cell& a, const Cell& b) {
  return a.n != b.n ? a.n < b.n : a.m < b.m;
}

enum class WeightMode { intent, literal, confidence };

// Per-bin loss weights, normalized so that sum == total cell count.
struct WeightMap {
  int gw = 0, gh = 0;
  std::vector<double> w;  // row-major [n][m]
  double alpha = 1.0;
  int covered = 0;  // K, unique concept-covered cells
  WeightMode mode = WeightMode::intent;

  double at(int m, int n) const { return w[static_cast<size_t>(n) * gw + m]; }
  double sum() const {
    double s = 0;
    for (double v : w) s += v;
    return s;
  }
};

// Floor/ceil discretization of a pixel box into the minimal covering cell
// rectangle.
BinBox box_to_bins(const Detection& det, const BinGrid& grid);

// Cells of a bin box in row-major order.
std::vector<Cell> cells_of(const BinBox& box);

// Union of covered cells over detections with p >= threshold, sorted
// row-major and deduplicated. cap > 0 keeps only the first `cap` cells after
// ranking by detection confidence (ties resolved row-major).
std::vector<Cell> concept_cells(const std::vector<Detection>& dets, const BinGrid& grid,
                                double threshold, int cap = 0);

struct AugmentResult {
  std::vector<int> tokens;  // padded with PAD to max_len
  bool truncated = false;
};

// Eq-style caption update: for every detection at or above the threshold,
// append the concept token followed by the location tokens of its covered
// cells. With cap > 0, a single capped group is appended instead. The output
// is truncated (location tokens dropped last-first) and padded to max_len.
AugmentResult augment_caption(const std::vector<int>& caption, const std::string& concept_name,
                              const std::vector<Detection>& dets, double threshold,
                              const BinGrid& grid, const Vocab& vocab, int max_len = 64,
                              int cap = 0);

// Weight map over cells with per-cell unnormalized confidence weights
// (confidence mode only; pass empty otherwise).
WeightMap weight_map_cells(const BinGrid& grid, const std::vector<Cell>& cells,
                           const std::vector<double>& cell_u, double alpha, WeightMode mode);

// Detection-driven weight map, consistent with augment_caption's cell set.
WeightMap weight_map(const std::vector<Detection>& dets, const BinGrid& grid, double alpha,
                     WeightMode mode, double threshold = 0.5, int cap = 0);

// Rigid shift of a cell set by one rounded N(0, sigma^2) draw per axis,
// clamped to the grid, deduplicated.
std::vector<Cell> perturb_cells(const std::vector<Cell>& cells, double sigma, const BinGrid& grid,
                                Rng& rng);

// |A n B| / |A u B| over unique cells; defined as 1 when both sets are empty.
double bin_iou(const std::vector<Cell>& a, const std::vector<Cell>& b);

enum class NegStrategy { uniform, random };

// Location cells used as negative-prompt geometry: an evenly strided lattice
// (uniform) or a seeded sample without replacement (random).
std::vector<Cell> negative_geometry(const BinGrid& grid, NegStrategy strategy, int count,
                                    Rng& rng);

std::vector<int> location_token_ids(const std::vector<Cell>& cells, const Vocab& vocab);

}  // namespace geomlab
