#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/filter_bank.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/image_io.hpp"
#include "pmiris/manifest.hpp"
#include "pmiris/polar.hpp"
#include "pmiris/rng.hpp"
#include "pmiris/segmentation.hpp"

namespace pmiris {

inline constexpr double two_pi = 6.28318530717958647692;

struct DecayRates {
  double blur_per_hour = 0.004;
  double contrast_loss_per_hour = 0.0015;
  double occlusion_growth_per_hour = 0.03;
  double wrinkle_amplitude_per_hour = 0.008;
};

struct SynthConfig {
  int n_subjects = 8;
  std::vector<double> captures_per_eye = {0, 12, 24, 48, 60, 110, 210, 369};
  std::uint64_t seed = 1;
  DecayRates decay;
  double rotation_jitter = 0.05;

  void validate() const {
    if (n_subjects < 2) throw InvalidConfig("SynthConfig: n_subjects must be >= 2");
    if (captures_per_eye.size() < 2)
      throw InvalidConfig("SynthConfig: need >= 2 captures per eye");
    for (std::size_t i = 0; i < captures_per_eye.size(); ++i) {
      if (!(captures_per_eye[i] >= 0.0))
        throw InvalidConfig("SynthConfig: pmi_hours must be >= 0");
      if (i > 0 && captures_per_eye[i] < captures_per_eye[i - 1])
        throw InvalidConfig("SynthConfig: captures_per_eye must be sorted ascending");
    }
    if (decay.blur_per_hour < 0.0 || decay.contrast_loss_per_hour < 0.0 ||
        decay.occlusion_growth_per_hour < 0.0 || decay.wrinkle_amplitude_per_hour < 0.0)
      throw InvalidConfig("SynthConfig: decay rates must be >= 0");
    if (rotation_jitter < 0.0) throw InvalidConfig("SynthConfig: rotation_jitter must be >= 0");
  }
};

namespace detail {

// Identity texture: three oriented band-pass noise fields. The oblique and
// vertical components carry structure a purely horizontal bank reads poorly,
// which leaves room for data-driven kernels.
inline RealGrid base_texture(Rng& rng) {
  static const Kernel2D horiz = gabor_kernel(9, 15, 7.0, 0.0, 3.0, 1.0, 0.0, "tex-h");
  static const Kernel2D oblique = gabor_kernel(15, 15, 9.0, 0.9, 3.5, 1.0, 0.0, "tex-o");
  static const Kernel2D vert = gabor_kernel(15, 9, 7.0, 1.57079632679489661923, 3.0, 1.0, 0.0,
                                            "tex-v");
  const struct {
    const Kernel2D* k;
    double w;
  } comps[] = {{&horiz, 0.45}, {&oblique, 0.85}, {&vert, 0.5}};

  RealGrid sum(polar_width, polar_height);
  for (const auto& c : comps) {
    RealGrid noise(polar_width, polar_height);
    for (auto& v : noise.data()) v = rng.normal();
    const RealGrid f = convolve2d_wrap_x(noise, *c.k);
    for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += c.w * f.data()[i];
  }
  double mean = 0.0;
  for (double v : sum.data()) mean += v;
  mean /= double(sum.size());
  double var = 0.0;
  for (double v : sum.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(sum.size()));
  RealGrid out(polar_width, polar_height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = 0.5 + 0.16 * (sum.data()[i] - mean) / sd;
    out.data()[i] = std::min(0.98, std::max(0.02, v));
  }
  return out;
}

inline RealGrid gaussian_blur_polar(const RealGrid& g, double sigma) {
  if (sigma < 1e-9) return g;
  const int radius = std::min(15, int(std::ceil(3.0 * sigma)));
  std::vector<double> w(std::size_t(radius) + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  for (int i = 0; i <= radius; ++i) w[std::size_t(i)] = std::exp(-0.5 * i * i / (sigma * sigma)) / norm;

  const int W = g.width(), H = g.height();
  RealGrid tmp(W, H), out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = w[0] * g.at(x, y);
      for (int i = 1; i <= radius; ++i)
        acc += w[std::size_t(i)] *
               (g.at(wrap_index(x - i, W), y) + g.at(wrap_index(x + i, W), y));
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = w[0] * tmp.at(x, y);
      for (int i = 1; i <= radius; ++i)
        acc += w[std::size_t(i)] *
               (tmp.at(x, clamp_index(y - i, H)) + tmp.at(x, clamp_index(y + i, H)));
      out.at(x, y) = acc;
    }
  return out;
}

// smooth sinusoidal row displacement, pinned at both radial boundaries
inline RealGrid radial_warp(const RealGrid& g, double amplitude, double phase) {
  if (amplitude < 1e-9) return g;
  const int W = g.width(), H = g.height();
  RealGrid out(W, H);
  for (int x = 0; x < W; ++x) {
    const double wave = std::sin(two_pi * 3.0 * x / W + phase);
    for (int y = 0; y < H; ++y) {
      const double profile = std::sin(3.14159265358979323846 * (y + 0.5) / H);
      const double sy = y + amplitude * wave * profile;
      const int y0 = clamp_index(int(std::floor(sy)), H);
      const int y1 = clamp_index(y0 + 1, H);
      const double f = std::min(1.0, std::max(0.0, sy - std::floor(sy)));
      out.at(x, y) = (1.0 - f) * g.at(x, y0) + f * g.at(x, y1);
    }
  }
  return out;
}

}  // namespace detail

struct SynthCapture {
  PolarIris polar;
  double alpha = 0.0;  // applied rotation
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;  // corner annotations
};

// One capture of one eye at pmi_hours, decayed and rotated; all randomness
// from the per-capture stream.
inline SynthCapture make_capture(const SynthConfig& cfg, const RealGrid& base, double pmi_hours,
                                 Rng& rng, const CaptureMeta& meta,
                                 double reference_angle = 0.0) {
  const double warp_phase = rng.uniform(0.0, two_pi);
  const double alpha = rng.uniform(-cfg.rotation_jitter, cfg.rotation_jitter);
  const int occl_center = int(rng.below(polar_width));

  RealGrid tex = detail::gaussian_blur_polar(base, cfg.decay.blur_per_hour * pmi_hours);
  const double keep = std::max(0.0, 1.0 - cfg.decay.contrast_loss_per_hour * pmi_hours);
  for (auto& v : tex.data()) v = 0.5 + (v - 0.5) * keep;
  tex = detail::radial_warp(tex, cfg.decay.wrinkle_amplitude_per_hour * pmi_hours, warp_phase);

  const int shift = int(std::lround(polar_width * alpha / two_pi));
  tex = shift_columns(tex, shift);
  MaskGrid mask(polar_width, polar_height, std::vector<std::uint8_t>(tex.size(), 1));

  const int occl_rows =
      std::min<long>(polar_height, std::lround(cfg.decay.occlusion_growth_per_hour * pmi_hours));
  if (occl_rows > 0) {
    const int width = int(std::min<long>(polar_width, std::lround(8.0 * occl_rows)));
    for (int y = polar_height - occl_rows; y < polar_height; ++y)
      for (int k = 0; k < width; ++k) {
        const int x = detail::wrap_index(occl_center - width / 2 + k, polar_width);
        mask.at(x, y) = 0;
        tex.at(x, y) = 0.82;
      }
  }

  SynthCapture cap;
  cap.polar = PolarIris(std::move(tex), std::move(mask), meta);
  cap.alpha = alpha;
  const double phi = reference_angle + alpha;
  const double cx = 320.0, cy = 240.0, r = 300.0;
  cap.x1 = cx - r * std::cos(phi);
  cap.y1 = cy - r * std::sin(phi);
  cap.x2 = cx + r * std::cos(phi);
  cap.y2 = cy + r * std::sin(phi);
  return cap;
}

inline std::string subject_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03d", s + 1);
  return buf;
}

inline std::string capture_name(int s, int eye, int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%c_c%02d", subject_name(s).c_str(), eye == 0 ? 'L' : 'R',
                idx);
  return buf;
}

inline std::vector<SynthCapture> generate_dataset(const SynthConfig& cfg,
                                                  double reference_angle = 0.0) {
  cfg.validate();
  std::vector<SynthCapture> out;
  for (int s = 0; s < cfg.n_subjects; ++s)
    for (int e = 0; e < 2; ++e) {
      Rng base_rng(Rng::derive(cfg.seed, std::uint64_t(s), std::uint64_t(e), 0));
      const RealGrid base = detail::base_texture(base_rng);
      for (std::size_t i = 0; i < cfg.captures_per_eye.size(); ++i) {
        Rng cap_rng(Rng::derive(cfg.seed, std::uint64_t(s), std::uint64_t(e), i + 1));
        const CaptureMeta meta{subject_name(s), e == 0 ? Eye::L : Eye::R,
                               cfg.captures_per_eye[i], capture_name(s, e, int(i))};
        out.push_back(make_capture(cfg, base, cfg.captures_per_eye[i], cap_rng, meta,
                                   reference_angle));
      }
    }
  return out;
}

// Writes textures + masks as PGM and a polar-kind manifest with corner
// annotations.
inline Manifest write_dataset(const SynthConfig& cfg, const std::string& out_dir,
                              double reference_angle = 0.0) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto captures = generate_dataset(cfg, reference_angle);
  Manifest m;
  m.reference_angle = reference_angle;
  for (const auto& cap : captures) {
    const std::string id = cap.polar.meta.capture_id;
    save_gray((fs::path(out_dir) / (id + ".pgm")).string(), quantize_unit(cap.polar.texture));
    GrayImage mimg(polar_width, polar_height);
    for (std::size_t i = 0; i < mimg.size(); ++i)
      mimg.data()[i] = cap.polar.mask.data()[i] ? 255 : 0;
    save_gray((fs::path(out_dir) / (id + "_mask.pgm")).string(), mimg);
    ManifestEntry e;
    e.capture_id = id;
    e.subject_id = cap.polar.meta.subject_id;
    e.eye = cap.polar.meta.eye;
    e.pmi_hours = cap.polar.meta.pmi_hours;
    e.image_path = id + ".pgm";
    e.mask_path = id + "_mask.pgm";
    e.has_corners = true;
    e.x1 = cap.x1;
    e.y1 = cap.y1;
    e.x2 = cap.x2;
    e.y2 = cap.y2;
    e.kind = "polar";
    m.entries.push_back(std::move(e));
  }
  save_manifest((fs::path(out_dir) / "manifest.json").string(), m);
  return m;
}

using PolarFn = std::function<double(double theta, double t)>;

// Bilinear reader of a polar raster as a (theta, radial fraction) field.
inline PolarFn polar_fn_from_grid(const RealGrid& g) {
  return [&g](double theta, double t) {
    const int W = g.width(), H = g.height();
    double x = theta / two_pi * W - 0.5;
    double y = t * H - 0.5;
    const double xf = x - std::floor(x);
    const double yf = std::min(1.0, std::max(0.0, y - std::floor(y)));
    const int x0 = detail::wrap_index(int(std::floor(x)), W);
    const int x1 = detail::wrap_index(x0 + 1, W);
    const int y0 = detail::clamp_index(int(std::floor(y)), H);
    const int y1 = detail::clamp_index(y0 + 1, H);
    return (1 - xf) * ((1 - yf) * g.at(x0, y0) + yf * g.at(x0, y1)) +
           xf * ((1 - yf) * g.at(x1, y0) + yf * g.at(x1, y1));
  };
}

// Cartesian projection of a polar texture between concentric circles; dark
// pupil, light sclera, 1 px edge blends.
inline GrayImage render_eye(int width, int height, const Circle& pupil, const Circle& iris,
                            const PolarFn& fn) {
  if (!(pupil.r > 0.0) || !(iris.r > pupil.r))
    throw InvalidParam("render_eye: need 0 < pupil.r < iris.r");
  const double pupil_v = 0.08, sclera_v = 0.92;
  GrayImage img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x - iris.cx, dy = y - iris.cy;
      const double r = std::hypot(dx, dy);
      double theta = std::atan2(dy, dx);
      if (theta < 0.0) theta += two_pi;
      double v;
      if (r <= pupil.r - 0.5) {
        v = pupil_v;
      } else if (r < pupil.r + 0.5) {
        const double f = r - (pupil.r - 0.5);
        const double tex = fn(theta, 0.0);
        v = (1.0 - f) * pupil_v + f * tex;
      } else if (r <= iris.r - 0.5) {
        v = fn(theta, (r - pupil.r) / (iris.r - pupil.r));
      } else if (r < iris.r + 0.5) {
        const double f = r - (iris.r - 0.5);
        const double tex = fn(theta, 1.0);
        v = (1.0 - f) * tex + f * sclera_v;
      } else {
        v = sclera_v;
      }
      img.at(x, y) = std::uint8_t(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
    }
  return img;
}

}  // namespace pmiris
