#pragma once

#include <string>
#include <vector>

#include "geomlab/geometry.hpp"
#include "geomlab/image.hpp"
#include "geomlab/manifest.hpp"
#include "geomlab/rng.hpp"

namespace geomlab {

enum class ShapeKind { circle, square, triangle };
enum class ShadeKind { dark, mid, light };
enum class BackgroundKind { plain, gradient, noise };
enum class ConceptKind { qr, watermark, text };

const char* to_string(ShapeKind s);
const char* to_string(ShadeKind s);
const char* to_string(BackgroundKind b);
const char* to_string(ConceptKind k);
ConceptKind concept_from_string(const std::string& s);

// Procedural base scene: one shape on one background, caption drawn from the
// fixed grammar "a {shade} {shape} on {background}".
struct SceneSpec {
  int size = 32;
  ShapeKind shape = ShapeKind::circle;
  ShadeKind shade = ShadeKind::mid;
  BackgroundKind bg = BackgroundKind::plain;
  uint64_t seed = 0;
};

struct RenderedScene {
  Image image;
  std::vector<std::string> caption;
};

RenderedScene render_base(const SceneSpec& spec);

// The concept texture at a given scale; shared by the stamp painter and the
// template detector's bank. For `text` the argument is the row width (height
// is fixed at 5 px); otherwise it is the square side.
Image concept_texture(ConceptKind kind, int scale);

// Stamp geometry limits: sides (or text widths) drawn uniformly from
// [size/4, size/2].
int min_stamp_scale(int image_size);
int max_stamp_scale(int image_size);
int text_band_height();

// Paints one concept stamp at a seeded random size/place, fully inside the
// image. Returns the tight ground-truth box with p = 1.
Detection inject_concept(Image& img, ConceptKind kind, Rng& rng);

struct BuildParams {
  int n = 2000;
  double icr = 0.5;
  ConceptKind kind = ConceptKind::watermark;
  uint64_t seed = 1;
  int image_size = 32;
  int n_test = 500;
  bool multi_stamp = false;
  std::string name = "icd";
};

struct BuiltSample {
  Image image;
  std::vector<std::string> caption;
  std::vector<Detection> boxes;
  std::string split;
};

// In-memory dataset build; captions never contain concept or location tokens,
// the test split is always stamp-free.
std::vector<BuiltSample> build_samples(const BuildParams& params);

// Renders, writes PGM files and the manifest. Rebuilds are byte-identical for
// the same params.
Manifest build_dataset(const BuildParams& params, const std::string& out_dir);

}  // namespace geomlab
