#include "geomlab/builder.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace geomlab {

namespace fs = std::filesystem;

const char* to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

const char* to_string(ShadeKind s) {
  switch (s) {
    case ShadeKind::dark: return "dark";
    case ShadeKind::mid: return "mid";
    case ShadeKind::light: return "light";
  }
  return "?";
}

const char* to_string(BackgroundKind b) {
  switch (b) {
    case BackgroundKind::plain: return "plain";
    case BackgroundKind::gradient: return "gradient";
    case BackgroundKind::noise: return "noise";
  }
  return "?";
}

const char* to_string(ConceptKind k) {
  switch (k) {
    case ConceptKind::qr: return "qr";
    case ConceptKind::watermark: return "watermark";
    case ConceptKind::text: return "text";
  }
  return "?";
}

ConceptKind concept_from_string(const std::string& s) {
  if (s == "qr") return ConceptKind::qr;
  if (s == "watermark") return ConceptKind::watermark;
  if (s == "text") return ConceptKind::text;
  throw ConfigError("unknown concept kind: " + s);
}

int min_stamp_scale(int image_size) { return image_size / 4; }
int max_stamp_scale(int image_size) { return image_size / 2; }
// 5 px glyph rows plus a 1 px band margin top and bottom
int text_band_height() { return 7; }

RenderedScene render_base(const SceneSpec& spec) {
  Rng rng(spec.seed);
  const int S = spec.size;
  Image img(S, S);

  // background
  switch (spec.bg) {
    case BackgroundKind::plain: {
      const float v = static_cast<float>(rng.uniform(0.55, 0.95));
      std::fill(img.px.begin(), img.px.end(), v);
      break;
    }
    case BackgroundKind::gradient: {
      const float v0 = static_cast<float>(rng.uniform(0.5, 0.95));
      const float v1 = static_cast<float>(rng.uniform(0.5, 0.95));
      const int dir = static_cast<int>(rng.uniform_int(0, 3));  // 4 ramp directions
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          float t = 0;
          switch (dir) {
            case 0: t = static_cast<float>(x) / (S - 1); break;
            case 1: t = static_cast<float>(y) / (S - 1); break;
            case 2: t = static_cast<float>(x + y) / (2 * S - 2); break;
            case 3: t = static_cast<float>((S - 1 - x) + y) / (2 * S - 2); break;
          }
          img.at(x, y) = v0 + (v1 - v0) * t;
        }
      break;
    }
    case BackgroundKind::noise: {
      const float base = static_cast<float>(rng.uniform(0.6, 0.9));
      for (float& v : img.px) v = base + static_cast<float>(rng.uniform(-0.08, 0.08));
      break;
    }
  }

  // shape
  const float shade_v = spec.shade == ShadeKind::dark ? 0.10f
                        : spec.shade == ShadeKind::mid ? 0.45f
                                                       : 0.78f;
  const int cx = S / 2 + static_cast<int>(rng.uniform_int(-S / 6, S / 6));
  const int cy = S / 2 + static_cast<int>(rng.uniform_int(-S / 6, S / 6));
  const int r = static_cast<int>(rng.uniform_int(S / 6, S / 4));
  switch (spec.shape) {
    case ShapeKind::circle:
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.at(x, y) = shade_v;
      break;
    case ShapeKind::square:
      for (int y = std::max(0, cy - r); y <= std::min(S - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(S - 1, cx + r); ++x)
          img.at(x, y) = shade_v;
      break;
    case ShapeKind::triangle: {
      // upward triangle: apex (cx, cy-r), base y = cy+r
      for (int y = std::max(0, cy - r); y <= std::min(S - 1, cy + r); ++y) {
        const float t = static_cast<float>(y - (cy - r)) / (2 * r);
        const int half = static_cast<int>(std::lround(t * r));
        for (int x = std::max(0, cx - half); x <= std::min(S - 1, cx + half); ++x)
          img.at(x, y) = shade_v;
      }
      break;
    }
  }
  img.clamp01();

  RenderedScene out;
  out.image = std::move(img);
  out.caption = {"a", to_string(spec.shade), to_string(spec.shape), "on", to_string(spec.bg)};
  return out;
}

namespace {

// stripe period grows with scale so a small template cannot fire inside a
// larger stamp
int stripe_period(int side) { return std::max(3, side / 4 + 1); }

// 3x5 glyph bitmaps, row-major top to bottom (1 = ink)
constexpr uint16_t kGlyphs[5] = {
    0b111101111101101,  // A-ish
    0b111100110100111,  // E-ish
    0b101101111101101,  // H-ish
    0b111101101101111,  // O-ish
    0b111010010010010,  // T-ish
};

bool glyph_on(int glyph, int gx, int gy) {
  return (kGlyphs[glyph % 5] >> (14 - (gy * 3 + gx))) & 1;
}

}  // namespace

Image concept_texture(ConceptKind kind, int scale) {
  switch (kind) {
    case ConceptKind::qr: {
      const int s = scale;
      Image t(s, s);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const int mx = x * 8 / s, my = y * 8 / s;
          const bool corner = (mx < 2 && my < 2) || (mx >= 6 && my < 2) || (mx < 2 && my >= 6);
          const bool dark = corner || ((mx + my) % 2 == 0);
          t.at(x, y) = dark ? 0.05f : 0.95f;
        }
      return t;
    }
    case ConceptKind::watermark: {
      // bordered diagonal-stripe banner; the frame anchors translation and
      // scale, which pure stripes cannot
      const int s = scale;
      const int period = stripe_period(s);
      Image t(s, s);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const bool frame = x == 0 || y == 0 || x == s - 1 || y == s - 1;
          t.at(x, y) = frame ? 0.0f : (((x + y) % period) * 2 < period ? 1.0f : 0.0f);
        }
      return t;
    }
    case ConceptKind::text: {
      const int w = scale, h = text_band_height();
      Image t(w, h, 0.95f);
      for (int x = 0; x < w; ++x) {
        const int slot = x / 4;
        const int gx = x % 4;
        if (gx == 3) continue;  // inter-glyph gap
        for (int gy = 0; gy < 5; ++gy)
          if (glyph_on(slot, gx, gy)) t.at(x, gy + 1) = 0.05f;
      }
      return t;
    }
  }
  throw ConfigError("concept_texture: bad kind");
}

Detection inject_concept(Image& img, ConceptKind kind, Rng& rng) {
  const int S = img.w;
  const int lo = min_stamp_scale(S), hi = max_stamp_scale(S);
  if (lo < 4) throw Error("inject_concept: image too small for the minimum stamp");
  const int scale = static_cast<int>(rng.uniform_int(lo, hi));
  const Image tex = concept_texture(kind, scale);
  const int x0 = static_cast<int>(rng.uniform_int(0, S - tex.w));
  const int y0 = static_cast<int>(rng.uniform_int(0, img.h - tex.h));

  const float opacity = kind == ConceptKind::watermark ? 0.4f : 1.0f;
  for (int y = 0; y < tex.h; ++y)
    for (int x = 0; x < tex.w; ++x) {
      float& dst = img.at(x0 + x, y0 + y);
      dst = (1.0f - opacity) * dst + opacity * tex.at(x, y);
    }
  img.clamp01();

  Detection gt;
  gt.p = 1.0;
  gt.a1 = x0;
  gt.b1 = y0;
  gt.a2 = x0 + tex.w;
  gt.b2 = y0 + tex.h;
  return gt;
}

std::vector<BuiltSample> build_samples(const BuildParams& params) {
  if (params.n < 1) throw Error("build_dataset: n must be >= 1");
  if (params.icr < 0.0 || params.icr > 1.0)
    throw Error(strformat("build_dataset: icr %.3f outside [0,1]", params.icr));

  Rng root(params.seed);
  Rng scene_rng = root.fork("scene");
  Rng stamp_rng = root.fork("stamp");
  Rng pick_rng = root.fork("pick");

  const int n_stamped = static_cast<int>(std::llround(params.n * params.icr));
  std::vector<int> order(static_cast<size_t>(params.n));
  for (int i = 0; i < params.n; ++i) order[static_cast<size_t>(i)] = i;
  pick_rng.shuffle(order);
  std::vector<bool> stamped(static_cast<size_t>(params.n), false);
  for (int i = 0; i < n_stamped; ++i) stamped[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;

  std::vector<BuiltSample> out;
  out.reserve(static_cast<size_t>(params.n + params.n_test));
  const int total = params.n + params.n_test;
  for (int i = 0; i < total; ++i) {
    const bool is_test = i >= params.n;
    Rng srng = scene_rng.fork(static_cast<uint64_t>(i));
    SceneSpec spec;
    spec.size = params.image_size;
    spec.seed = srng.next_u64();
    spec.shape = static_cast<ShapeKind>(srng.uniform_int(0, 2));
    spec.shade = static_cast<ShadeKind>(srng.uniform_int(0, 2));
    spec.bg = static_cast<BackgroundKind>(srng.uniform_int(0, 2));
    RenderedScene scene = render_base(spec);

    BuiltSample s;
    s.image = std::move(scene.image);
    s.caption = std::move(scene.caption);
    s.split = is_test ? "test" : "train";
    if (!is_test && stamped[static_cast<size_t>(i)]) {
      Rng irng = stamp_rng.fork(static_cast<uint64_t>(i));
      const int stamps = params.multi_stamp ? static_cast<int>(irng.uniform_int(1, 2)) : 1;
      for (int k = 0; k < stamps; ++k) s.boxes.push_back(inject_concept(s.image, params.kind, irng));
    }
    out.push_back(std::move(s));
  }
  return out;
}

Manifest build_dataset(const BuildParams& params, const std::string& out_dir) {
  auto samples = build_samples(params);
  fs::create_directories(out_dir + "/images");

  Manifest m;
  m.header.name = params.name;
  m.header.kind = to_string(params.kind);
  m.header.icr = params.icr;
  m.header.n_train = params.n;
  m.header.n_test = params.n_test;
  m.header.image_size = params.image_size;
  m.header.seed = params.seed;
  m.header.stamped = 0;

  int train_idx = 0, test_idx = 0;
  for (const auto& s : samples) {
    ManifestRecord r;
    const bool is_test = s.split == "test";
    r.id = strformat("%s_%05d", is_test ? "test" : "train", is_test ? test_idx++ : train_idx++);
    r.image_path = "images/" + r.id + ".pgm";
    std::string cap;
    for (size_t i = 0; i < s.caption.size(); ++i) {
      if (i) cap += ' ';
      cap += s.caption[i];
    }
    r.caption = cap;
    r.boxes = s.boxes;
    r.split = s.split;
    if (!s.boxes.empty()) ++m.header.stamped;
    save_pgm(s.image, out_dir + "/" + r.image_path);
    m.records.push_back(std::move(r));
  }
  m.save(out_dir);
  return m;
}

}  // namespace geomlab
