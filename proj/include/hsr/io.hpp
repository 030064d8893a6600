#pragma once

// File formats:
//   HSC1  cube: "HSC1" | H u32 | W u32 | S u32 | dtype u8 (0 = f32) | band-sequential f32 payload
//   SRW1  named tensors: "SRW1" | count u32 | { name_len u32 | name | rank u32 | extents u32... | f32 payload }
//   PPM (P6) / PGM (P5) rasters, CSV with LF line endings.
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsr/cube.hpp"
#include "hsr/error.hpp"
#include "hsr/params.hpp"
#include "hsr/tensor.hpp"

namespace hsr::io {

inline constexpr std::size_t kCubeHeaderBytes = 17;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline std::uint32_t get_u32(std::string_view in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

inline float get_f32(std::string_view in, std::size_t off) { return std::bit_cast<float>(get_u32(in, off)); }

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  require<IoError>(v <= 0xffffffffULL, what, " exceeds 32-bit range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require<IoError>(static_cast<bool>(in), "cannot open '", path.string(), "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require<IoError>(static_cast<bool>(out), "cannot write '", tmp.string(), "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require<IoError>(static_cast<bool>(out), "write failed for '", tmp.string(), "'");
  }
  std::filesystem::rename(tmp, path);
}

// --- HSC1 cubes --------------------------------------------------------------

inline std::string encode_cube(const HsiCube& cube) {
  const std::size_t H = cube.height(), W = cube.width(), S = cube.bands();
  std::string out = "HSC1";
  detail::put_u32(out, detail::checked_u32(H, "height"));
  detail::put_u32(out, detail::checked_u32(W, "width"));
  detail::put_u32(out, detail::checked_u32(S, "bands"));
  out.push_back('\0');
  out.reserve(kCubeHeaderBytes + H * W * S * 4);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) detail::put_f32(out, cube.at(h, w, s));
  return out;
}

inline HsiCube decode_cube(std::string_view bytes, std::string id) {
  require<IoError>(bytes.size() >= kCubeHeaderBytes, "truncated header");
  require<IoError>(bytes.substr(0, 4) == "HSC1", "bad magic");
  const std::size_t H = detail::get_u32(bytes, 4), W = detail::get_u32(bytes, 8), S = detail::get_u32(bytes, 12);
  require<IoError>(static_cast<unsigned char>(bytes[16]) == 0, "unsupported dtype code ",
                   static_cast<int>(static_cast<unsigned char>(bytes[16])));
  require<IoError>(H >= 1 && W >= 1 && S >= 1, "empty cube dimensions ", H, "x", W, "x", S);
  const auto wide = static_cast<unsigned __int128>(H) * W * S * 4;
  require<IoError>(wide <= bytes.size(), "truncated payload");
  const std::size_t payload = H * W * S * 4;
  require<IoError>(bytes.size() - kCubeHeaderBytes >= payload, "truncated payload");
  require<IoError>(bytes.size() - kCubeHeaderBytes == payload, "trailing bytes after payload");
  HsiCube cube(H, W, S, std::move(id));
  std::size_t off = kCubeHeaderBytes;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w, off += 4) {
        const float v = detail::get_f32(bytes, off);
        require<IoError>(std::isfinite(v), "non-finite value in payload");
        cube.at(h, w, s) = std::clamp(static_cast<double>(v), 0.0, 1.0);
      }
  return cube;
}

/// Reads an HSC1 cube; id = file stem, values clamped to [0, 1].
inline HsiCube read_cube(const std::filesystem::path& path) {
  return decode_cube(read_file(path), path.stem().string());
}

inline void write_cube(const HsiCube& cube, const std::filesystem::path& path) {
  write_file_atomic(path, encode_cube(cube));
}

/// Raw little-endian f32 samples in band-sequential (bsq) or band-interleaved-by-pixel (bip) order.
enum class RawLayout { bsq, bip };

inline HsiCube import_raw(std::string_view bytes, std::size_t H, std::size_t W, std::size_t S, RawLayout layout,
                          std::string id) {
  require<IoError>(bytes.size() == H * W * S * 4, "raw file holds ", bytes.size(), " bytes, expected ",
                   H * W * S * 4);
  std::vector<double> values(H * W * S);
  for (std::size_t i = 0; i < H * W * S; ++i) {
    const float v = detail::get_f32(bytes, i * 4);
    require<IoError>(std::isfinite(v), "non-finite value in raw input");
    values[i] = std::clamp(static_cast<double>(v), 0.0, 1.0);
  }
  HsiCube cube(H, W, S, std::move(id));
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t s = 0; s < S; ++s)
        cube.at(h, w, s) = layout == RawLayout::bip ? values[(h * W + w) * S + s] : values[(s * H + h) * W + w];
  return cube;
}

// --- rasters -----------------------------------------------------------------

struct Raster {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved

  bool operator==(const Raster&) const = default;
};

inline std::uint8_t quantize_unit(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Three bands (1-based) rendered as RGB after a joint min-max stretch.
/// A zero-range stretch yields an all-zero raster.
inline Raster pseudo_rgb(const HsiCube& cube, std::array<std::size_t, 3> bands = {25, 15, 5}) {
  for (std::size_t b : bands)
    require(b >= 1 && b <= cube.bands(), "pseudo_rgb: band index ", b, " outside 1..", cube.bands());
  double lo = cube.at(0, 0, bands[0] - 1), hi = lo;
  for (std::size_t h = 0; h < cube.height(); ++h)
    for (std::size_t w = 0; w < cube.width(); ++w)
      for (std::size_t b : bands) {
        lo = std::min(lo, cube.at(h, w, b - 1));
        hi = std::max(hi, cube.at(h, w, b - 1));
      }
  Raster r{cube.height(), cube.width(), 3, std::vector<std::uint8_t>(cube.height() * cube.width() * 3, 0)};
  if (hi == lo) return r;
  for (std::size_t h = 0; h < cube.height(); ++h)
    for (std::size_t w = 0; w < cube.width(); ++w)
      for (std::size_t k = 0; k < 3; ++k)
        r.pixels[(h * cube.width() + w) * 3 + k] = quantize_unit((cube.at(h, w, bands[k] - 1) - lo) / (hi - lo));
  return r;
}

/// Grayscale raster from an H x W map already in [0, 1].
inline Raster gray_raster(const Tensor& map) {
  require<ShapeError>(map.rank() == 2, "gray_raster: expected H x W map, got ", shape_str(map.shape()));
  Raster r{map.extent(0), map.extent(1), 1, std::vector<std::uint8_t>(map.size())};
  for (std::size_t i = 0; i < map.size(); ++i) r.pixels[i] = quantize_unit(map[i]);
  return r;
}

/// P6 for 3-channel rasters, P5 for 1-channel.
inline std::string encode_pnm(const Raster& r) {
  require(r.channels == 1 || r.channels == 3, "encode_pnm: unsupported channel count ", r.channels);
  std::string out = (r.channels == 3 ? "P6\n" : "P5\n") + std::to_string(r.width) + " " + std::to_string(r.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  return out;
}

inline std::string encode_raw_f32(const Tensor& t) {
  std::string out;
  out.reserve(t.size() * 4);
  for (double v : t.data()) detail::put_f32(out, v);
  return out;
}

// --- CSV ---------------------------------------------------------------------

inline std::string format_double(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct PixelCoord {
  std::size_t row = 0, col = 0;
};

/// One row per band (1-based index), one column per (label, pixel) pair, cube-major.
inline std::string export_spectra_csv(const std::vector<std::pair<std::string, const HsiCube*>>& cubes,
                                      const std::vector<PixelCoord>& pixels) {
  require(!cubes.empty(), "export_spectra_csv: no cubes");
  const std::size_t S = cubes.front().second->bands();
  for (const auto& [label, c] : cubes) {
    require<ShapeError>(c->bands() == S, "export_spectra_csv: cube '", label, "' has ", c->bands(),
                        " bands, expected ", S);
    for (const PixelCoord& p : pixels)
      require(p.row < c->height() && p.col < c->width(), "export_spectra_csv: pixel (", p.row, ",", p.col,
              ") outside cube '", label, "' of size ", c->height(), "x", c->width());
  }
  std::string out = "band";
  for (const auto& [label, c] : cubes)
    for (const PixelCoord& p : pixels) out += "," + label + "@" + std::to_string(p.row) + ":" + std::to_string(p.col);
  out += "\n";
  for (std::size_t s = 0; s < S; ++s) {
    out += std::to_string(s + 1);
    for (const auto& [label, c] : cubes)
      for (const PixelCoord& p : pixels) out += "," + format_double(c->at(p.row, p.col, s), 9);
    out += "\n";
  }
  return out;
}

// --- SRW1 named tensors ------------------------------------------------------

inline std::string encode_params(const ParamStore& store) {
  std::string out = "SRW1";
  detail::put_u32(out, detail::checked_u32(store.size(), "tensor count"));
  for (const auto& [name, t] : store) {
    detail::put_u32(out, detail::checked_u32(name.size(), "name length"));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_u32(out, detail::checked_u32(e, "extent"));
    for (double v : t.data()) detail::put_f32(out, v);
  }
  return out;
}

inline ParamStore decode_params(std::string_view bytes) {
  std::size_t off = 0;
  auto need = [&](std::size_t n) { require<IoError>(bytes.size() - off >= n, "truncated weights file"); };
  need(8);
  require<IoError>(bytes.substr(0, 4) == "SRW1", "bad magic");
  const std::size_t count = detail::get_u32(bytes, 4);
  off = 8;
  ParamStore store;
  for (std::size_t i = 0; i < count; ++i) {
    need(4);
    const std::size_t len = detail::get_u32(bytes, off);
    off += 4;
    need(len);
    std::string name(bytes.substr(off, len));
    off += len;
    need(4);
    const std::size_t rank = detail::get_u32(bytes, off);
    off += 4;
    require<IoError>(rank >= 1 && rank <= kMaxRank, "tensor '", name, "' has invalid rank ", rank);
    need(4 * rank);
    Shape shape(rank);
    for (std::size_t& e : shape) {
      e = detail::get_u32(bytes, off);
      off += 4;
    }
    const std::size_t n = shape_size(shape);
    need(4 * n);
    std::vector<double> values(n);
    for (double& v : values) {
      const float f = detail::get_f32(bytes, off);
      require<IoError>(std::isfinite(f), "non-finite value in tensor '", name, "'");
      v = f;
      off += 4;
    }
    require<IoError>(!store.contains(name), "duplicate tensor name '", name, "'");
    store.set(name, Tensor(std::move(shape), std::move(values)));
  }
  require<IoError>(off == bytes.size(), "trailing bytes after weights");
  return store;
}

inline ParamStore read_params(const std::filesystem::path& path) { return decode_params(read_file(path)); }
inline void write_params(const ParamStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, encode_params(store));
}

// --- key=value sidecars ------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

inline std::string encode_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require<IoError>(eq != std::string::npos, "malformed key=value line '", line, "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace hsr::io
