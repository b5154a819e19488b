#include "geomlab/image.hpp"

#include <cmath>
#include <fstream>

namespace geomlab {

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("pgm: cannot write " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    float v = img.px[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IOError("pgm: write failed " + path);
}

Image load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("pgm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IOError("pgm: not a P5 file: " + path);
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255) throw IOError("pgm: unsupported header in " + path);
  is.get();  // single whitespace after header
  Image img(w, h);
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw IOError("pgm: truncated data in " + path);
  for (size_t i = 0; i < bytes.size(); ++i) img.px[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

}  // namespace geomlab
