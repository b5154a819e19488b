#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "geomlab/common.hpp"
#include "geomlab/params.hpp"

namespace geomlab {

// Checkpoint layout (little endian):
//   magic "GELB1" | u8 dtype (0=f32, 1=f64) | u32 parameter count
//   per parameter: u32 name length, name bytes, u32 rank, u32 dims..., raw values
// Round-trips are bit-exact.
namespace ckpt {

inline constexpr char kMagic[5] = {'G', 'E', 'L', 'B', '1'};

template <typename T>
constexpr uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IOError("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <typename T>
void save(const ParamSet<T>& ps, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 5);
  const uint8_t dt = dtype_code<T>();
  os.write(reinterpret_cast<const char*>(&dt), 1);
  write_u32(os, static_cast<uint32_t>(ps.size()));
  for (const auto& e : ps.entries()) {
    write_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(os, static_cast<uint32_t>(e.value.shape.size()));
    for (int d : e.value.shape) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(e.value.data.data()),
             static_cast<std::streamsize>(e.value.data.size() * sizeof(T)));
  }
  if (!os) throw IOError("checkpoint: write failed: " + path);
}

template <typename T>
ParamSet<T> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("checkpoint: cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw IOError("checkpoint: bad magic in " + path);
  uint8_t dt = 0;
  is.read(reinterpret_cast<char*>(&dt), 1);
  if (dt != dtype_code<T>())
    throw IOError(strformat("checkpoint: dtype code %d does not match requested type", dt));
  const uint32_t count = read_u32(is);
  ParamSet<T> ps;
  for (uint32_t p = 0; p < count; ++p) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!is) throw IOError("checkpoint: truncated parameter data in " + path);
    ps.add(name, std::move(t));
  }
  return ps;
}

}  // namespace ckpt
}  // namespace geomlab
