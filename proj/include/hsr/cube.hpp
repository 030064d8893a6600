#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <string>
#include <utility>

#include "hsr/error.hpp"
#include "hsr/tensor.hpp"

namespace hsr {

/// H x W x S hyperspectral cube, bands in acquisition order.
struct HsiCube {
  Tensor data;
  std::string id;

  HsiCube() = default;
  HsiCube(Tensor t, std::string cube_id) : data(std::move(t)), id(std::move(cube_id)) {
    require<ShapeError>(data.rank() == 3, "HsiCube: expected H x W x S tensor, got ", shape_str(data.shape()));
    require<ShapeError>(data.channels() >= 1, "HsiCube: needs at least one band");
  }
  HsiCube(std::size_t h, std::size_t w, std::size_t s, std::string cube_id = {})
      : HsiCube(Tensor(Shape{h, w, s}), std::move(cube_id)) {}

  std::size_t height() const { return data.height(); }
  std::size_t width() const { return data.width(); }
  std::size_t bands() const { return data.channels(); }
  double& at(std::size_t h, std::size_t w, std::size_t s) { return data.at(h, w, s); }
  double at(std::size_t h, std::size_t w, std::size_t s) const { return data.at(h, w, s); }
};

inline void require_same_shape(const HsiCube& a, const HsiCube& b, const char* what) {
  require<ShapeError>(a.data.shape() == b.data.shape(), what, ": cube shape ", shape_str(a.data.shape()),
                      " vs ", shape_str(b.data.shape()));
}

inline HsiCube clamp01(HsiCube c) {
  for (double& v : c.data.data()) v = std::clamp(v, 0.0, 1.0);
  return c;
}

/// What a cube becomes after a write/read cycle: f32 quantization, then the ingestion clamp.
inline HsiCube f32_roundtrip(HsiCube c) {
  for (double& v : c.data.data()) v = std::clamp(static_cast<double>(static_cast<float>(v)), 0.0, 1.0);
  return c;
}

}  // namespace hsr
