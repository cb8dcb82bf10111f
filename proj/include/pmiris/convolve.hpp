#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/grid.hpp"

namespace pmiris {

enum class Provenance { gabor, learned };

inline const char* to_string(Provenance p) {
  return p == Provenance::gabor ? "gabor" : "learned";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "gabor") return Provenance::gabor;
  if (s == "learned") return Provenance::learned;
  throw ParseError("unknown provenance '" + s + "'");
}

// A single real-valued filter kernel. Odd dimensions so application is
// center-aligned.
struct Kernel2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;  // row-major, rows*cols
  Provenance provenance = Provenance::gabor;
  std::string label;

  Kernel2D() = default;
  Kernel2D(int r, int c, std::vector<double> w, Provenance p, std::string lbl)
      : rows(r), cols(c), weights(std::move(w)), provenance(p), label(std::move(lbl)) {
    validate();
  }

  double at(int ky, int kx) const { return weights[std::size_t(ky) * cols + kx]; }

  void validate() const {
    if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0)
      throw InvalidParam("kernel dims must be odd and >= 1 (" + label + ")");
    if (weights.size() != std::size_t(rows) * cols)
      throw InvalidParam("kernel weight count does not match dims (" + label + ")");
    for (double w : weights)
      if (!std::isfinite(w)) throw InvalidParam("kernel weight not finite (" + label + ")");
  }
};

namespace detail {

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

inline int wrap_index(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace detail

// Dense 2D correlation-style convolution with the polar-image boundary
// policy: the horizontal axis (angle) wraps circularly, the vertical axis
// (radius) clamps to the border. Output has the input's size:
//   out[y][x] = sum_{i,j} k[i][j] * in[clampY(y+i-cy)][wrapX(x+j-cx)]
template <typename S>
Grid<S> convolve2d_wrap_x(const Grid<S>& img, const Kernel2D& k) {
  k.validate();
  const int w = img.width(), h = img.height();
  const int cy = k.rows / 2, cx = k.cols / 2;
  Grid<S> out(w, h);
  std::vector<S> kw(k.weights.begin(), k.weights.end());
  for (int y = 0; y < h; ++y) {
    S* orow = out.row(y);
    for (int ky = 0; ky < k.rows; ++ky) {
      const S* irow = img.row(detail::clamp_index(y + ky - cy, h));
      const S* krow = kw.data() + std::size_t(ky) * k.cols;
      for (int kx = 0; kx < k.cols; ++kx) {
        const S c = krow[kx];
        const int dx = kx - cx;
        // split the x loop into the contiguous span and the two wrapped ends
        int x0 = dx < 0 ? -dx : 0;
        int x1 = dx > 0 ? w - dx : w;
        if (x0 > w) x0 = w;
        if (x1 < 0) x1 = 0;
        for (int x = 0; x < x0; ++x) orow[x] += c * irow[detail::wrap_index(x + dx, w)];
        for (int x = x0; x < x1; ++x) orow[x] += c * irow[x + dx];
        for (int x = x1; x < w; ++x) orow[x] += c * irow[detail::wrap_index(x + dx, w)];
      }
    }
  }
  return out;
}

}  // namespace pmiris
