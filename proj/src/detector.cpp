#include "geomlab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace geomlab {

std::vector<Detection> oracle_detect(const std::vector<Detection>& gt, int image_w, int image_h,
                                     const OracleConfig& cfg, Rng& rng) {
  std::vector<Detection> out;
  out.reserve(gt.size());
  for (const auto& g : gt) {
    const bool drop = cfg.fn_rate > 0.0 && rng.uniform() < cfg.fn_rate;
    double a1 = g.a1, b1 = g.b1, a2 = g.a2, b2 = g.b2;
    if (cfg.sigma_px > 0.0) {
      a1 += rng.normal(0.0, cfg.sigma_px);
      b1 += rng.normal(0.0, cfg.sigma_px);
      a2 += rng.normal(0.0, cfg.sigma_px);
      b2 += rng.normal(0.0, cfg.sigma_px);
    }
    double p = 1.0;
    if (cfg.conf_mode == OracleConfig::Confidence::uniform) p = rng.uniform(0.7, 1.0);
    if (drop) continue;
    a1 = std::clamp(a1, 0.0, static_cast<double>(image_w - 1));
    b1 = std::clamp(b1, 0.0, static_cast<double>(image_h - 1));
    a2 = std::clamp(a2, a1 + 1.0, static_cast<double>(image_w));
    b2 = std::clamp(b2, b1 + 1.0, static_cast<double>(image_h));
    out.push_back({p, a1, b1, a2, b2});
  }
  return out;
}

namespace {

// 3x3 mean removal (clamped borders). Matching on the high-passed signal keeps
// the semi-transparent watermark separable from underlying scene content:
// blending is linear, so hp(0.6 bg + 0.4 tex) = 0.6 hp(bg) + 0.4 hp(tex), and
// hp(bg) is near zero away from edges.
Image high_pass(const Image& img) {
  Image out(img.w, img.h);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float acc = 0.0f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = std::clamp(x + dx, 0, img.w - 1);
          const int yy = std::clamp(y + dy, 0, img.h - 1);
          acc += img.at(xx, yy);
        }
      out.at(x, y) = img.at(x, y) - acc / 9.0f;
    }
  return out;
}

}  // namespace

TemplateDetector::TemplateDetector(ConceptKind kind, int image_size, double tau)
    : kind_(kind), tau_(tau) {
  const int lo = min_stamp_scale(image_size), hi = max_stamp_scale(image_size);
  if (lo < 4) throw ConfigError("template detector: image too small for the stamp range");
  for (int s = lo; s <= hi; ++s) {
    const Image tex = concept_texture(kind, s);
    const Image hp = high_pass(tex);
    // match on the template interior: its high-pass values only read template
    // pixels, so they equal the image's high-pass at an exact stamp
    Templ t;
    t.w = tex.w;
    t.h = tex.h;
    const int iw = t.w - 2, ih = t.h - 2;
    double mean = 0.0;
    for (int y = 1; y < t.h - 1; ++y)
      for (int x = 1; x < t.w - 1; ++x) mean += hp.at(x, y);
    mean /= static_cast<double>(iw) * ih;
    t.centered.resize(static_cast<size_t>(iw) * ih);
    double sq = 0.0;
    for (int y = 0; y < ih; ++y)
      for (int x = 0; x < iw; ++x) {
        const float v = static_cast<float>(hp.at(x + 1, y + 1) - mean);
        t.centered[static_cast<size_t>(y) * iw + x] = v;
        sq += static_cast<double>(v) * v;
      }
    t.norm = std::sqrt(sq);
    if (t.norm < 1e-9) throw ConfigError("template detector: flat template");
    bank_.push_back(std::move(t));
  }
}

double TemplateDetector::ncc(const Image& img, const Image& tmpl, int x0, int y0) {
  double tmean = 0.0;
  for (float v : tmpl.px) tmean += v;
  tmean /= static_cast<double>(tmpl.px.size());
  double dot = 0.0, psum = 0.0, psq = 0.0;
  for (int y = 0; y < tmpl.h; ++y)
    for (int x = 0; x < tmpl.w; ++x) {
      const double pv = img.at(x0 + x, y0 + y);
      const double tv = tmpl.at(x, y) - tmean;
      dot += pv * tv;
      psum += pv;
      psq += pv * pv;
    }
  const double n = static_cast<double>(tmpl.px.size());
  const double pvar = psq - psum * psum / n;
  double tsq = 0.0;
  for (float v : tmpl.px) tsq += (v - tmean) * (v - tmean);
  if (pvar < 1e-9 || tsq < 1e-9) return 0.0;
  return dot / (std::sqrt(pvar) * std::sqrt(tsq));
}

std::vector<Detection> TemplateDetector::detect(const Image& img) const {
  struct Cand {
    double score;
    int x, y, w, h;
  };
  std::vector<Cand> cands;

  const Image hp = high_pass(img);

  // integral images for window mean / variance over the high-passed signal
  const int W = img.w, H = img.h;
  std::vector<double> I1(static_cast<size_t>(W + 1) * (H + 1), 0.0);
  std::vector<double> I2(static_cast<size_t>(W + 1) * (H + 1), 0.0);
  for (int y = 0; y < H; ++y) {
    double row1 = 0.0, row2 = 0.0;
    for (int x = 0; x < W; ++x) {
      const double v = hp.at(x, y);
      row1 += v;
      row2 += v * v;
      I1[static_cast<size_t>(y + 1) * (W + 1) + x + 1] = I1[static_cast<size_t>(y) * (W + 1) + x + 1] + row1;
      I2[static_cast<size_t>(y + 1) * (W + 1) + x + 1] = I2[static_cast<size_t>(y) * (W + 1) + x + 1] + row2;
    }
  }
  auto rect_sum = [&](const std::vector<double>& I, int x0, int y0, int w, int h) {
    return I[static_cast<size_t>(y0 + h) * (W + 1) + x0 + w] - I[static_cast<size_t>(y0) * (W + 1) + x0 + w] -
           I[static_cast<size_t>(y0 + h) * (W + 1) + x0] + I[static_cast<size_t>(y0) * (W + 1) + x0];
  };

  for (const auto& t : bank_) {
    if (t.w > W || t.h > H) continue;
    const int iw = t.w - 2, ih = t.h - 2;
    const double n = static_cast<double>(iw) * ih;
    for (int y0 = 0; y0 + t.h <= H; ++y0) {
      for (int x0 = 0; x0 + t.w <= W; ++x0) {
        const double psum = rect_sum(I1, x0 + 1, y0 + 1, iw, ih);
        const double psq = rect_sum(I2, x0 + 1, y0 + 1, iw, ih);
        const double pvar = psq - psum * psum / n;
        if (pvar < 1e-9) continue;
        // template interiors are mean-removed, so the plain dot product is
        // already the covariance term
        double dot = 0.0;
        for (int ty = 0; ty < ih; ++ty) {
          const float* prow = &hp.px[static_cast<size_t>(y0 + 1 + ty) * W + x0 + 1];
          const float* trow = &t.centered[static_cast<size_t>(ty) * iw];
          for (int tx = 0; tx < iw; ++tx) dot += static_cast<double>(prow[tx]) * trow[tx];
        }
        const double score = dot / (std::sqrt(pvar) * t.norm);
        if (score >= tau_) cands.push_back({score, x0, y0, t.w, t.h});
      }
    }
  }

  // order: quantized score desc, then larger area, then position (stable)
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    const long qa = std::lround(a.score * 100), qb = std::lround(b.score * 100);
    if (qa != qb) return qa > qb;
    const int aa = a.w * a.h, ab = b.w * b.h;
    if (aa != ab) return aa > ab;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.w > b.w;
  });

  // NMS at IoU 0.3, plus intersection-over-minimum suppression so a small
  // window nested in an already-kept stamp never survives as a duplicate
  std::vector<Detection> kept;
  for (const auto& c : cands) {
    Detection d{c.score, static_cast<double>(c.x), static_cast<double>(c.y),
                static_cast<double>(c.x + c.w), static_cast<double>(c.y + c.h)};
    bool overlapped = false;
    for (const auto& k : kept) {
      const double ix = std::max(0.0, std::min(d.a2, k.a2) - std::max(d.a1, k.a1));
      const double iy = std::max(0.0, std::min(d.b2, k.b2) - std::max(d.b1, k.b1));
      const double inter = ix * iy;
      const double amin = std::min((d.a2 - d.a1) * (d.b2 - d.b1), (k.a2 - k.a1) * (k.b2 - k.b1));
      if (box_iou(d, k) > 0.3 || inter / amin > 0.5) {
        overlapped = true;
        break;
      }
    }
    if (!overlapped) kept.push_back(d);
  }
  return kept;
}

double box_iou(const Detection& a, const Detection& b) {
  const double ix = std::max(0.0, std::min(a.a2, b.a2) - std::max(a.a1, b.a1));
  const double iy = std::max(0.0, std::min(a.b2, b.b2) - std::max(a.b1, b.b1));
  const double inter = ix * iy;
  const double ua = (a.a2 - a.a1) * (a.b2 - a.b1) + (b.a2 - b.a1) * (b.b2 - b.b1) - inter;
  return ua <= 0.0 ? 0.0 : inter / ua;
}

MatchStats match_detections(const std::vector<Detection>& dets, const std::vector<Detection>& gt,
                            double iou_thresh) {
  MatchStats s;
  std::vector<bool> used(gt.size(), false);
  for (const auto& d : dets) {
    int best = -1;
    double best_iou = iou_thresh;
    for (size_t i = 0; i < gt.size(); ++i) {
      if (used[i]) continue;
      const double iou = box_iou(d, gt[i]);
      if (iou >= best_iou) {
        best_iou = iou;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      used[static_cast<size_t>(best)] = true;
      ++s.tp;
    } else {
      ++s.fp;
    }
  }
  for (bool u : used)
    if (!u) ++s.fn;
  return s;
}

void save_detections(const std::vector<DetectionDump>& dumps, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IOError("detections: cannot write " + path);
  for (const auto& d : dumps) {
    nlohmann::ordered_json j;
    j["image_id"] = d.image_id;
    nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
    for (const auto& b : d.boxes) {
      nlohmann::ordered_json bj;
      bj["p"] = b.p;
      bj["a1"] = b.a1;
      bj["b1"] = b.b1;
      bj["a2"] = b.a2;
      bj["b2"] = b.b2;
      boxes.push_back(bj);
    }
    j["boxes"] = boxes;
    os << j.dump() << "\n";
  }
}

std::vector<DetectionDump> load_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("detections: cannot open " + path);
  std::vector<DetectionDump> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    DetectionDump d;
    d.image_id = j.at("image_id").get<std::string>();
    for (const auto& bj : j.at("boxes")) {
      Detection b;
      b.p = bj.at("p").get<double>();
      b.a1 = bj.at("a1").get<double>();
      b.b1 = bj.at("b1").get<double>();
      b.a2 = bj.at("a2").get<double>();
      b.b2 = bj.at("b2").get<double>();
      d.boxes.push_back(b);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace geomlab
