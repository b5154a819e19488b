#include "geomlab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace geomlab {

BinBox box_to_bins(const Detection& det, const BinGrid& grid) {
  if (det.a1 < 0 || det.b1 < 0 || det.a2 > grid.image_w || det.b2 > grid.image_h ||
      det.a1 >= det.a2 || det.b1 >= det.b2)
    throw Error(strformat("box_to_bins: box (%.1f,%.1f,%.1f,%.1f) outside %dx%d image", det.a1,
                          det.b1, det.a2, det.b2, grid.image_w, grid.image_h));
  BinBox b;
  b.a1 = static_cast<int>(std::floor(det.a1 / grid.bin_w));
  b.b1 = static_cast<int>(std::floor(det.b1 / grid.bin_h));
  b.a2 = static_cast<int>(std::ceil(det.a2 / grid.bin_w));
  b.b2 = static_cast<int>(std::ceil(det.b2 / grid.bin_h));
  return b;
}

std::vector<Cell> cells_of(const BinBox& box) {
  std::vector<Cell> cells;
  cells.reserve(static_cast<size_t>(box.cells()));
  for (int n = box.b1; n < box.b2; ++n)
    for (int m = box.a1; m < box.a2; ++m) cells.push_back({m, n});
  return cells;
}

namespace {

void sort_unique(std::vector<Cell>& cells) {
  std::sort(cells.begin(), cells.end(), cell_less);
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
}

}  // namespace

std::vector<Cell> concept_cells(const std::vector<Detection>& dets, const BinGrid& grid,
                                double threshold, int cap) {
  // collect (cell, best confidence)
  std::vector<std::pair<Cell, double>> scored;
  for (const auto& d : dets) {
    if (d.p < threshold) continue;
    for (const Cell& c : cells_of(box_to_bins(d, grid))) {
      bool found = false;
      for (auto& sc : scored) {
        if (sc.first == c) {
          sc.second = std::max(sc.second, d.p);
          found = true;
          break;
        }
      }
      if (!found) scored.push_back({c, d.p});
    }
  }
  if (cap > 0 && static_cast<int>(scored.size()) > cap) {
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return cell_less(a.first, b.first);
    });
    scored.resize(static_cast<size_t>(cap));
  }
  std::vector<Cell> cells;
  cells.reserve(scored.size());
  for (const auto& sc : scored) cells.push_back(sc.first);
  sort_unique(cells);
  return cells;
}

std::vector<int> location_token_ids(const std::vector<Cell>& cells, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(cells.size());
  for (const Cell& c : cells) ids.push_back(vocab.location_id(c.m, c.n));
  return ids;
}

AugmentResult augment_caption(const std::vector<int>& caption, const std::string& concept_name,
                              const std::vector<Detection>& dets, double threshold,
                              const BinGrid& grid, const Vocab& vocab, int max_len, int cap) {
  const int concept_tok = vocab.concept_id(concept_name);
  AugmentResult out;
  out.tokens = caption;
  std::vector<bool> is_loc(1, false);
  is_loc.resize(out.tokens.size(), false);

  auto append_group = [&](const std::vector<Cell>& cells) {
    out.tokens.push_back(concept_tok);
    is_loc.push_back(false);
    for (const Cell& c : cells) {
      out.tokens.push_back(vocab.location_id(c.m, c.n));
      is_loc.push_back(true);
    }
  };

  if (cap > 0) {
    auto cells = concept_cells(dets, grid, threshold, cap);
    bool any = false;
    for (const auto& d : dets)
      if (d.p >= threshold) any = true;
    if (any) append_group(cells);
  } else {
    for (const auto& d : dets) {
      if (d.p < threshold) continue;
      append_group(cells_of(box_to_bins(d, grid)));
    }
  }

  // overflow: drop location tokens, last first
  while (static_cast<int>(out.tokens.size()) > max_len) {
    bool dropped = false;
    for (size_t i = out.tokens.size(); i-- > 0;) {
      if (is_loc[i]) {
        out.tokens.erase(out.tokens.begin() + static_cast<long>(i));
        is_loc.erase(is_loc.begin() + static_cast<long>(i));
        dropped = true;
        out.truncated = true;
        break;
      }
    }
    if (!dropped) {  // no location tokens left; trim the tail
      out.tokens.resize(static_cast<size_t>(max_len));
      out.truncated = true;
      break;
    }
  }
  while (static_cast<int>(out.tokens.size()) < max_len) out.tokens.push_back(Vocab::kPad);
  return out;
}

WeightMap weight_map_cells(const BinGrid& grid, const std::vector<Cell>& cells,
                           const std::vector<double>& cell_u, double alpha, WeightMode mode) {
  if (alpha <= 0) throw Error("weight_map: alpha must be positive");
  if (mode != WeightMode::confidence && alpha > 1.0)
    throw Error("weight_map: alpha must be in (0,1] for intent/literal modes");
  const int gw = grid.grid_w(), gh = grid.grid_h();
  const int T = gw * gh;
  WeightMap wm;
  wm.gw = gw;
  wm.gh = gh;
  wm.alpha = alpha;
  wm.mode = mode;
  wm.w.assign(static_cast<size_t>(T), 1.0);
  wm.covered = static_cast<int>(cells.size());
  const int K = wm.covered;
  if (K == 0) return wm;  // uniform map of ones

  switch (mode) {
    case WeightMode::intent: {
      // concept region de-emphasized by factor alpha, normalized to sum T
      const double d = alpha * K + (T - K);
      std::fill(wm.w.begin(), wm.w.end(), static_cast<double>(T) / d);
      for (const Cell& c : cells)
        wm.w[static_cast<size_t>(c.n) * gw + c.m] = alpha * T / d;
      break;
    }
    case WeightMode::literal: {
      // the printed form: concept region carries the larger weight
      const double d = K + alpha * (T - K);
      std::fill(wm.w.begin(), wm.w.end(), alpha * T / d);
      for (const Cell& c : cells)
        wm.w[static_cast<size_t>(c.n) * gw + c.m] = static_cast<double>(T) / d;
      break;
    }
    case WeightMode::confidence: {
      if (cell_u.size() != cells.size())
        throw Error("weight_map: confidence mode needs one u value per cell");
      for (size_t i = 0; i < cells.size(); ++i)
        wm.w[static_cast<size_t>(cells[i].n) * gw + cells[i].m] = cell_u[i];
      double s = wm.sum();
      if (s <= 0) throw NumericError("weight_map: confidence weights sum to zero");
      const double scale = static_cast<double>(T) / s;
      for (double& v : wm.w) v *= scale;
      break;
    }
  }
  return wm;
}

WeightMap weight_map(const std::vector<Detection>& dets, const BinGrid& grid, double alpha,
                     WeightMode mode, double threshold, int cap) {
  auto cells = concept_cells(dets, grid, threshold, cap);
  std::vector<double> u;
  if (mode == WeightMode::confidence) {
    u.reserve(cells.size());
    for (const Cell& c : cells) {
      double best = 0.0;  // max over covering detections of (1-p)^alpha
      for (const auto& d : dets) {
        if (d.p < threshold) continue;
        const BinBox b = box_to_bins(d, grid);
        if (c.m >= b.a1 && c.m < b.a2 && c.n >= b.b1 && c.n < b.b2)
          best = std::max(best, std::pow(1.0 - d.p, alpha));
      }
      u.push_back(best);
    }
  }
  return weight_map_cells(grid, cells, u, alpha, mode);
}

std::vector<Cell> perturb_cells(const std::vector<Cell>& cells, double sigma, const BinGrid& grid,
                                Rng& rng) {
  if (sigma < 0) throw Error("perturb_cells: sigma must be non-negative");
  const double e1 = sigma > 0 ? rng.normal(0.0, sigma) : 0.0;
  const double e2 = sigma > 0 ? rng.normal(0.0, sigma) : 0.0;
  std::vector<Cell> out;
  out.reserve(cells.size());
  const int gw = grid.grid_w(), gh = grid.grid_h();
  for (const Cell& c : cells) {
    Cell p;
    p.m = std::clamp(static_cast<int>(std::lround(c.m + e1)), 0, gw - 1);
    p.n = std::clamp(static_cast<int>(std::lround(c.n + e2)), 0, gh - 1);
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(), cell_less);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double bin_iou(const std::vector<Cell>& a, const std::vector<Cell>& b) {
  std::vector<Cell> sa = a, sb = b;
  std::sort(sa.begin(), sa.end(), cell_less);
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  std::sort(sb.begin(), sb.end(), cell_less);
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  size_t inter = 0, i = 0, j = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa[i] == sb[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (cell_less(sa[i], sb[j])) {
      ++i;
    } else {
      ++j;
    }
  }
  const size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Cell> negative_geometry(const BinGrid& grid, NegStrategy strategy, int count,
                                    Rng& rng) {
  const int gw = grid.grid_w(), gh = grid.grid_h();
  const int T = gw * gh;
  if (count < 1 || count > T)
    throw Error(strformat("negative_geometry: count %d outside [1,%d]", count, T));

  if (strategy == NegStrategy::random) {
    std::vector<int> idx(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i) idx[static_cast<size_t>(i)] = i;
    rng.shuffle(idx);
    std::vector<Cell> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back({idx[static_cast<size_t>(i)] % gw, idx[static_cast<size_t>(i)] / gw});
    return out;
  }

  // uniform: pick the factor pair (cx, cy), cx*cy == count, best matching the
  // grid aspect; fall back to a strided pick over the flattened grid.
  int best_cx = -1, best_cy = -1;
  long best_score = -1;
  for (int cx = 1; cx <= count; ++cx) {
    if (count % cx != 0) continue;
    const int cy = count / cx;
    if (cx > gw || cy > gh) continue;
    const long score = std::labs(static_cast<long>(cx) * gh - static_cast<long>(cy) * gw);
    if (best_cx < 0 || score < best_score) {
      best_cx = cx;
      best_cy = cy;
      best_score = score;
    }
  }
  std::vector<Cell> out;
  out.reserve(static_cast<size_t>(count));
  if (best_cx > 0) {
    for (int j = 0; j < best_cy; ++j) {
      const int n = (2 * j + 1) * gh / (2 * best_cy);
      for (int i = 0; i < best_cx; ++i) {
        const int m = (2 * i + 1) * gw / (2 * best_cx);
        out.push_back({m, n});
      }
    }
  } else {
    for (int i = 0; i < count; ++i) {
      const int idx = static_cast<int>((2LL * i + 1) * T / (2LL * count));
      out.push_back({idx % gw, idx / gw});
    }
  }
  return out;
}

}  // namespace geomlab
