#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/segmentation.hpp"

namespace pmiris {

inline constexpr int polar_width = 512;
inline constexpr int polar_height = 64;
inline constexpr int patch_width = polar_width / 2;

enum class Eye { L, R };

inline const char* to_string(Eye e) { return e == Eye::L ? "L" : "R"; }

inline Eye eye_from_string(const std::string& s) {
  if (s == "L") return Eye::L;
  if (s == "R") return Eye::R;
  throw ParseError("eye must be \"L\" or \"R\", got \"" + s + "\"");
}

struct CaptureMeta {
  std::string subject_id;
  Eye eye = Eye::L;
  double pmi_hours = 0.0;
  std::string capture_id;

  void validate() const {
    if (!(pmi_hours >= 0.0)) throw InvalidParam("CaptureMeta: pmi_hours must be >= 0");
  }
};

inline bool same_eye_identity(const CaptureMeta& a, const CaptureMeta& b) {
  return a.subject_id == b.subject_id && a.eye == b.eye;
}

struct PolarIris {
  RealGrid texture;
  MaskGrid mask;
  CaptureMeta meta;

  PolarIris() : texture(polar_width, polar_height), mask(polar_width, polar_height) {}
  PolarIris(RealGrid t, MaskGrid m, CaptureMeta meta_)
      : texture(std::move(t)), mask(std::move(m)), meta(std::move(meta_)) {
    if (texture.width() != polar_width || texture.height() != polar_height)
      throw DimensionMismatch("PolarIris: texture must be 512x64");
    if (!mask.same_dims(texture)) throw DimensionMismatch("PolarIris: mask dims != texture dims");
    meta.validate();
  }
};

enum class PatchSide { left, right };

inline const char* to_string(PatchSide s) { return s == PatchSide::left ? "left" : "right"; }

struct IrisPatch {
  RealGrid texture;
  MaskGrid mask;
  PatchSide side = PatchSide::left;
  CaptureMeta meta;

  IrisPatch() : texture(patch_width, polar_height), mask(patch_width, polar_height) {}
};

inline double occlusion_fraction(const MaskGrid& m) {
  return 1.0 - double(count_ones(m)) / double(m.size());
}

// Rubber-sheet unwrap: rays leave the pupil center at θ = 2π·col/512 and the
// sample slides from the pupil edge to the iris edge with fraction
// (row+0.5)/64. Texture is bilinear (scaled to [0,1]), mask nearest-neighbor;
// samples outside the image get mask 0 and neutral texture.
inline PolarIris unwrap(const GrayImage& img, const SegmentationResult& seg,
                        const CaptureMeta& meta = {},
                        const MaskGrid* cartesian_mask = nullptr) {
  meta.validate();
  const int w = img.width(), h = img.height();
  MaskGrid geom = default_mask(w, h, seg);
  if (cartesian_mask) geom = intersect_masks(geom, *cartesian_mask);

  RealGrid tex(polar_width, polar_height);
  MaskGrid msk(polar_width, polar_height);
  const double dx = seg.pupil.cx - seg.iris.cx;
  const double dy = seg.pupil.cy - seg.iris.cy;
  long outside = 0;
  for (int col = 0; col < polar_width; ++col) {
    const double theta = 2.0 * 3.14159265358979323846 * col / polar_width;
    const double ux = std::cos(theta), uy = std::sin(theta);
    // iris edge along this ray: |C_p + s·u − C_i| = r_i, positive root
    const double b = dx * ux + dy * uy;
    const double c = dx * dx + dy * dy - seg.iris.r * seg.iris.r;
    const double disc = b * b - c;
    const double s_iris = disc > 0.0 ? -b + std::sqrt(disc) : seg.iris.r;
    for (int row = 0; row < polar_height; ++row) {
      const double t = (row + 0.5) / polar_height;
      const double rad = seg.pupil.r + t * (s_iris - seg.pupil.r);
      const double px = seg.pupil.cx + rad * ux;
      const double py = seg.pupil.cy + rad * uy;
      if (px < 0.0 || px > w - 1 || py < 0.0 || py > h - 1) {
        ++outside;
        tex.at(col, row) = 0.5;
        msk.at(col, row) = 0;
        continue;
      }
      const int x0 = int(px), y0 = int(py);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = px - x0, fy = py - y0;
      const double v = (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x1, y0) +
                       (1 - fx) * fy * img.at(x0, y1) + fx * fy * img.at(x1, y1);
      tex.at(col, row) = v / 255.0;
      msk.at(col, row) = geom.at(int(std::lround(px)), int(std::lround(py)));
    }
  }
  if (outside > 0.95 * polar_width * polar_height)
    throw SegmentationOutOfBounds("unwrap: " + std::to_string(outside) + " of " +
                                  std::to_string(polar_width * polar_height) +
                                  " samples outside image");
  return PolarIris(std::move(tex), std::move(msk), meta);
}

// Cancels capture-to-capture rotation using the eye-corner axis: the polar
// image is shifted by −round(512·(φ−reference_angle)/2π) columns, where φ is
// the corner-to-corner angle.
inline PolarIris align(const PolarIris& p, double x1, double y1, double x2, double y2,
                       double reference_angle = 0.0) {
  if (x1 == x2 && y1 == y2) throw DegenerateCorners("align: corner points coincide");
  const double phi = std::atan2(y2 - y1, x2 - x1);
  const long shift =
      std::lround(polar_width * (phi - reference_angle) / (2.0 * 3.14159265358979323846));
  PolarIris out;
  out.texture = shift_columns(p.texture, -int(shift));
  out.mask = shift_columns(p.mask, -int(shift));
  out.meta = p.meta;
  return out;
}

// Splits into left ([0,256)) and right ([256,512)) halves and keeps the ones
// whose occluded fraction stays within max_occlusion.
inline std::vector<IrisPatch> curate_patches(const PolarIris& p, double max_occlusion = 0.2) {
  if (!(max_occlusion >= 0.0 && max_occlusion <= 1.0))
    throw InvalidParam("curate_patches: max_occlusion must be in [0,1]");
  std::vector<IrisPatch> out;
  for (int half = 0; half < 2; ++half) {
    IrisPatch patch;
    patch.side = half == 0 ? PatchSide::left : PatchSide::right;
    patch.meta = p.meta;
    const int x0 = half * patch_width;
    for (int y = 0; y < polar_height; ++y)
      for (int x = 0; x < patch_width; ++x) {
        patch.texture.at(x, y) = p.texture.at(x0 + x, y);
        patch.mask.at(x, y) = p.mask.at(x0 + x, y);
      }
    if (occlusion_fraction(patch.mask) <= max_occlusion) out.push_back(std::move(patch));
  }
  return out;
}

}  // namespace pmiris
