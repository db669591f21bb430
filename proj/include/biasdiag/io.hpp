#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "biasdiag/errors.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// Binary tensor dump ("BLTN"): magic, version u32=1, dtype u8 (0 = f64),
// rank u32, extents u32 little-endian, payload f64 little-endian row-major.
// Used for model files, exported gradients and dataset fixtures.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("bltn: truncated stream");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw FormatError("bltn: truncated payload");
  std::uint64_t u = 0;
  for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

inline constexpr char kBltnMagic[4] = {'B', 'L', 'T', 'N'};

inline void write_bltn(std::ostream& os, const Tensor& t) {
  os.write(kBltnMagic, 4);
  detail::put_u32(os, 1);                 // version
  os.put(static_cast<char>(0));           // dtype 0 = f64
  detail::put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
  for (std::size_t e : t.shape()) {
    detail::put_u32(os, static_cast<std::uint32_t>(e));
  }
  for (double v : t.values()) detail::put_f64(os, v);
}

inline Tensor read_bltn(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBltnMagic, 4) != 0) {
    throw FormatError("bltn: bad magic");
  }
  const std::uint32_t version = detail::get_u32(is);
  if (version != 1) throw FormatError("bltn: unsupported version " + std::to_string(version));
  const int dtype = is.get();
  if (dtype != 0) throw FormatError("bltn: unsupported dtype " + std::to_string(dtype));
  const std::uint32_t rank = detail::get_u32(is);
  if (rank > 8) throw FormatError("bltn: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = detail::get_u32(is);
    if (e == 0) throw FormatError("bltn: zero extent");
  }
  std::vector<double> data(shape_product(shape));
  for (double& v : data) v = detail::get_f64(is);
  return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// Filesystem helpers. Writes go to a temp file and rename into place.
// ---------------------------------------------------------------------------

inline std::ifstream open_input(const std::filesystem::path& path,
                                std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return is;
}

inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& body,
                         std::ios::openmode mode = std::ios::out) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, mode | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    body(os);
    os.flush();
    if (!os) throw RuntimeFailure("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeFailure("rename failed: " + tmp.string() + " -> " + path.string());
}

inline void write_bltn_file(const std::filesystem::path& path, const Tensor& t) {
  atomic_write(path, [&](std::ostream& os) { write_bltn(os, t); }, std::ios::binary);
}

inline Tensor read_bltn_file(const std::filesystem::path& path) {
  auto is = open_input(path, std::ios::binary);
  return read_bltn(is);
}

// Stack images of a common shape into one rank-(r+1) tensor and back.
inline Tensor stack_tensors(const std::vector<Tensor>& items) {
  if (items.empty()) throw EmptyInput("stack_tensors: no tensors");
  const Shape& inner = items.front().shape();
  Shape s;
  s.push_back(items.size());
  s.insert(s.end(), inner.begin(), inner.end());
  Tensor out(std::move(s));
  auto vo = out.values();
  std::size_t off = 0;
  for (const Tensor& t : items) {
    if (t.shape() != inner) throw ShapeMismatch("stack_tensors: mixed shapes");
    const auto vt = t.values();
    std::copy(vt.begin(), vt.end(), vo.begin() + off);
    off += vt.size();
  }
  return out;
}

inline std::vector<Tensor> unstack_tensor(const Tensor& stacked) {
  if (stacked.shape().size() < 2) {
    throw ShapeMismatch("unstack: need rank >= 2, got " + shape_str(stacked.shape()));
  }
  const std::size_t count = stacked.shape()[0];
  Shape inner(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t step = shape_product(inner);
  std::vector<Tensor> out;
  out.reserve(count);
  const auto vs = stacked.values();
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> data(vs.begin() + k * step, vs.begin() + (k + 1) * step);
    out.emplace_back(inner, std::move(data));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 8-bit PGM heat-map export. Signed values are mapped symmetrically:
// pixel = round(127.5 + 127.5 * value / scale), scale = max |value| (or 1).
// The caller records the scale in a sidecar so the map stays invertible.
// ---------------------------------------------------------------------------

inline double write_pgm(std::ostream& os, const Tensor& map_hw) {
  if (map_hw.shape().size() != 2) {
    throw ShapeMismatch("pgm: expected rank-2 map, got " + shape_str(map_hw.shape()));
  }
  double scale = 0.0;
  for (double v : map_hw.values()) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) scale = 1.0;
  const std::size_t h = map_hw.shape()[0];
  const std::size_t w = map_hw.shape()[1];
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : map_hw.values()) {
    const long p = std::lround(127.5 + 127.5 * (v / scale));
    os.put(static_cast<char>(std::clamp(p, 0L, 255L)));
  }
  return scale;
}

}  // namespace biasdiag
