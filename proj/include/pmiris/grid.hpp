#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pmiris/error.hpp"

namespace pmiris {

// Row-major 2D raster. The workhorse value type behind images, masks and
// filter response maps. Immutable use is the norm; all pipeline operations
// take grids by const reference and return fresh ones.
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int width, int height, T fill = T{}) : w_(width), h_(height) {
    check_dims(width, height);
    data_.assign(std::size_t(width) * height, fill);
  }

  Grid(int width, int height, std::vector<T> data) : w_(width), h_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != std::size_t(width) * height)
      throw DimensionMismatch("grid data length does not match width*height");
  }

  int width() const { return w_; }
  int height() const { return h_; }
  std::size_t size() const { return data_.size(); }

  T& at(int x, int y) { return data_[std::size_t(y) * w_ + x]; }
  const T& at(int x, int y) const { return data_[std::size_t(y) * w_ + x]; }

  T* row(int y) { return data_.data() + std::size_t(y) * w_; }
  const T* row(int y) const { return data_.data() + std::size_t(y) * w_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <class U>
  bool same_dims(const Grid<U>& o) const {
    return w_ == o.width() && h_ == o.height();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.w_ == b.w_ && a.h_ == b.h_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(int w, int h) {
    if (w < 1 || h < 1) throw InvalidParam("grid dimensions must be >= 1");
  }

  int w_ = 0;
  int h_ = 0;
  std::vector<T> data_;
};

// 8-bit single-channel raster, values in [0,255].
using GrayImage = Grid<std::uint8_t>;
// Real-valued raster used for filter responses and normalized textures.
using RealGrid = Grid<double>;
// Binary raster: 1 = valid iris texture, 0 = occluded / outside.
using MaskGrid = Grid<std::uint8_t>;

inline std::size_t count_ones(const MaskGrid& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += (v != 0);
  return n;
}

// Circular column shift: column c of the result holds column (c - s) mod W
// of the input, i.e. content moves right by s.
template <typename T>
Grid<T> shift_columns(const Grid<T>& g, int s) {
  const int w = g.width();
  int r = s % w;
  if (r < 0) r += w;
  Grid<T> out(w, g.height());
  for (int y = 0; y < g.height(); ++y) {
    const T* src = g.row(y);
    T* dst = out.row(y);
    for (int x = 0; x < w; ++x) {
      int sx = x - r;
      if (sx < 0) sx += w;
      dst[x] = src[sx];
    }
  }
  return out;
}

template <typename To, typename From>
Grid<To> grid_cast(const Grid<From>& g) {
  Grid<To> out(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = To(g.data()[i]);
  return out;
}

}  // namespace pmiris
