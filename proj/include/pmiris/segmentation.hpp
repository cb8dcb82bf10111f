#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/image_io.hpp"

namespace pmiris {

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
  }
};

inline double center_distance(const Circle& a, const Circle& b) {
  return std::hypot(a.cx - b.cx, a.cy - b.cy);
}

// inner lies fully within outer (small slack for integer-grid detections)
inline bool is_nested(const Circle& inner, const Circle& outer, double slack = 2.0) {
  return center_distance(inner, outer) + inner.r <= outer.r + slack;
}

struct HoughConfig {
  int r_min = 8;
  int r_max = 0;  // 0: min(width, height) / 2
  double edge_threshold = 60.0;
  int accumulator_step = 1;

  void validate() const {
    if (r_min < 1) throw InvalidConfig("HoughConfig: r_min must be >= 1");
    if (r_max != 0 && r_max < r_min) throw InvalidConfig("HoughConfig: r_max < r_min");
    if (edge_threshold <= 0.0) throw InvalidConfig("HoughConfig: edge_threshold must be > 0");
    if (accumulator_step < 1) throw InvalidConfig("HoughConfig: accumulator_step must be >= 1");
  }
};

struct SegmentationResult {
  Circle pupil;
  Circle iris;

  SegmentationResult(const Circle& pupil_, const Circle& iris_) : pupil(pupil_), iris(iris_) {
    if (!(pupil.r > 0.0) || !(iris.r > 0.0))
      throw InvalidParam("SegmentationResult: radii must be positive");
    if (pupil.r >= iris.r) throw InvalidParam("SegmentationResult: pupil radius >= iris radius");
    if (!is_nested(pupil, iris))
      throw InvalidParam("SegmentationResult: pupil not nested inside iris");
  }
};

namespace detail {

struct EdgePoint {
  int x, y;
  float nx, ny;  // unit gradient
};

struct CircleCandidate {
  int cx, cy, r;
  double score;  // supporting votes / circumference
};

inline void sobel_edges(const GrayImage& img, double threshold, std::vector<EdgePoint>& out) {
  const int w = img.width(), h = img.height();
  // 3x3 binomial smooth (clamped borders) to stabilize gradient directions
  std::vector<float> sm(std::size_t(w) * h);
  for (int y = 0; y < h; ++y) {
    const int ym = y > 0 ? y - 1 : 0, yp = y < h - 1 ? y + 1 : h - 1;
    for (int x = 0; x < w; ++x) {
      const int xm = x > 0 ? x - 1 : 0, xp = x < w - 1 ? x + 1 : w - 1;
      const auto px = [&](int xx, int yy) { return float(img.at(xx, yy)); };
      sm[std::size_t(y) * w + x] =
          (px(xm, ym) + 2 * px(x, ym) + px(xp, ym) + 2 * px(xm, y) + 4 * px(x, y) +
           2 * px(xp, y) + px(xm, yp) + 2 * px(x, yp) + px(xp, yp)) /
          16.0f;
    }
  }
  auto s = [&](int x, int y) { return sm[std::size_t(y) * w + x]; };
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const float gx = (s(x + 1, y - 1) + 2 * s(x + 1, y) + s(x + 1, y + 1)) -
                       (s(x - 1, y - 1) + 2 * s(x - 1, y) + s(x - 1, y + 1));
      const float gy = (s(x - 1, y + 1) + 2 * s(x, y + 1) + s(x + 1, y + 1)) -
                       (s(x - 1, y - 1) + 2 * s(x, y - 1) + s(x + 1, y - 1));
      const float mag = std::sqrt(gx * gx + gy * gy);
      if (mag > threshold) out.push_back({x, y, gx / mag, gy / mag});
    }
  }
}

// merged local maxima of the vote space, strongest first
inline std::vector<CircleCandidate> hough_candidates(const GrayImage& img,
                                                     const HoughConfig& cfg) {
  const int w = img.width(), h = img.height();
  const int r_max = cfg.r_max > 0 ? cfg.r_max : std::min(w, h) / 2;
  std::vector<EdgePoint> edges;
  sobel_edges(img, cfg.edge_threshold, edges);
  if (edges.empty()) throw NoCircleFound("no edge points above threshold");

  std::vector<CircleCandidate> raw;
  std::vector<std::uint16_t> acc(std::size_t(w) * h);
  for (int r = cfg.r_min; r <= r_max; r += cfg.accumulator_step) {
    std::fill(acc.begin(), acc.end(), 0);
    for (const auto& e : edges) {
      // a circular edge's gradient is radial; vote both ways so bright-on-dark
      // and dark-on-bright boundaries are treated alike
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        const int cx = int(std::lround(e.x + sgn * r * e.nx));
        const int cy = int(std::lround(e.y + sgn * r * e.ny));
        if (cx >= 0 && cx < w && cy >= 0 && cy < h) ++acc[std::size_t(cy) * w + cx];
      }
    }
    const double circumference = 2.0 * 3.14159265358979323846 * r;
    const std::uint16_t floor_votes = std::uint16_t(std::max(6.0, 0.15 * circumference));
    for (int y = 1; y < h - 1; ++y) {
      for (int x = 1; x < w - 1; ++x) {
        const std::uint16_t v = acc[std::size_t(y) * w + x];
        if (v < floor_votes) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const std::uint16_t nb = acc[std::size_t(y + dy) * w + (x + dx)];
            if (nb > v || (nb == v && (dy < 0 || (dy == 0 && dx < 0)))) {
              peak = false;
              break;
            }
          }
        if (peak) raw.push_back({x, y, r, v / circumference});
      }
    }
  }
  if (raw.empty()) throw NoCircleFound("no circle candidates in vote space");

  std::sort(raw.begin(), raw.end(), [](const CircleCandidate& a, const CircleCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.r != b.r) return a.r < b.r;
    if (a.cy != b.cy) return a.cy < b.cy;
    return a.cx < b.cx;
  });
  // cross-radius suppression: one candidate per distinct circle
  std::vector<CircleCandidate> kept;
  for (const auto& c : raw) {
    bool dup = false;
    for (const auto& k : kept) {
      if (std::abs(c.r - k.r) <= 3 && std::hypot(double(c.cx - k.cx), double(c.cy - k.cy)) <= 4.0) {
        dup = true;
        break;
      }
    }
    if (!dup) {
      kept.push_back(c);
      if (kept.size() >= 32) break;
    }
  }
  return kept;
}

}  // namespace detail

// Detects the pupil and iris boundaries as the best nested pair of circle
// candidates (score = supported fraction of circumference).
inline SegmentationResult find_boundaries(const GrayImage& img, const HoughConfig& cfg = {}) {
  cfg.validate();
  if (img.width() < 3 || img.height() < 3) throw InvalidParam("find_boundaries: image too small");
  const auto cands = detail::hough_candidates(img, cfg);

  double best_sum = -1.0;
  const detail::CircleCandidate* best_in = nullptr;
  const detail::CircleCandidate* best_out = nullptr;
  for (const auto& outer : cands) {
    for (const auto& inner : cands) {
      if (&inner == &outer || inner.r >= outer.r) continue;
      const Circle ci{double(inner.cx), double(inner.cy), double(inner.r)};
      const Circle co{double(outer.cx), double(outer.cy), double(outer.r)};
      if (!is_nested(ci, co)) continue;
      if (inner.r > 0.92 * outer.r) continue;  // same boundary picked twice
      const double sum = inner.score + outer.score;
      if (sum > best_sum) {
        best_sum = sum;
        best_in = &inner;
        best_out = &outer;
      }
    }
  }
  if (!best_in) throw NoCircleFound("no nested circle pair among candidates");
  return SegmentationResult({double(best_in->cx), double(best_in->cy), double(best_in->r)},
                            {double(best_out->cx), double(best_out->cy), double(best_out->r)});
}

// Geometry-only validity mask: inside the iris circle, outside the pupil.
inline MaskGrid default_mask(int width, int height, const SegmentationResult& seg) {
  MaskGrid m(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      m.at(x, y) = seg.iris.contains(x, y) && !seg.pupil.contains(x, y) ? 1 : 0;
  return m;
}

// External occlusion mask image: >127 marks valid texture.
inline MaskGrid load_mask(const std::string& path, int width, int height) {
  const GrayImage img = load_gray(path);
  if (img.width() != width || img.height() != height)
    throw DimensionMismatch("mask " + path + " is " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()) + ", expected " + std::to_string(width) +
                            "x" + std::to_string(height));
  MaskGrid m(width, height);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = img.data()[i] > 127 ? 1 : 0;
  return m;
}

inline MaskGrid intersect_masks(const MaskGrid& a, const MaskGrid& b) {
  if (!a.same_dims(b)) throw DimensionMismatch("intersect_masks: dimension mismatch");
  MaskGrid out(a.width(), a.height());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (a.data()[i] && b.data()[i]) ? 1 : 0;
  return out;
}

}  // namespace pmiris
