#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pmiris/convolve.hpp"
#include "pmiris/error.hpp"
#include "pmiris/filter_bank.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/image_io.hpp"
#include "pmiris/polar.hpp"

namespace pmiris {

// Row-major bit raster, one u64 block per 64 columns (rows padded to whole
// words; pad bits stay zero).
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(int width, int height)
      : width_(width), height_(height), wpr_((width + 63) / 64),
        words_(std::size_t(wpr_) * height, 0) {
    if (width < 1 || height < 1) throw InvalidParam("BitPlane: dims must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int words_per_row() const { return wpr_; }
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool get(int x, int y) const {
    return (words_[std::size_t(y) * wpr_ + x / 64] >> (x % 64)) & 1u;
  }
  void set(int x, int y, bool v) {
    auto& w = words_[std::size_t(y) * wpr_ + x / 64];
    const std::uint64_t bit = std::uint64_t(1) << (x % 64);
    w = v ? (w | bit) : (w & ~bit);
  }

  long count() const {
    long n = 0;
    for (auto w : words_) n += std::popcount(w);
    return n;
  }

  bool same_dims(const BitPlane& o) const { return width_ == o.width_ && height_ == o.height_; }
  bool operator==(const BitPlane& o) const {
    return same_dims(o) && words_ == o.words_;
  }

  // content moves right by s columns, wrapping
  BitPlane shifted_columns(int s) const {
    BitPlane out(width_, height_);
    const int sh = ((s % width_) + width_) % width_;
    if (sh == 0) {
      out.words_ = words_;
      return out;
    }
    if (width_ % 64 == 0) {
      const int word_shift = sh / 64, bit_shift = sh % 64;
      for (int y = 0; y < height_; ++y) {
        const std::uint64_t* src = &words_[std::size_t(y) * wpr_];
        std::uint64_t* dst = &out.words_[std::size_t(y) * wpr_];
        for (int j = 0; j < wpr_; ++j) {
          const int j0 = (j - word_shift % wpr_ + wpr_) % wpr_;
          if (bit_shift == 0) {
            dst[j] = src[j0];
          } else {
            const int jm = (j0 - 1 + wpr_) % wpr_;
            dst[j] = (src[j0] << bit_shift) | (src[jm] >> (64 - bit_shift));
          }
        }
      }
    } else {
      for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) out.set((x + sh) % width_, y, get(x, y));
    }
    return out;
  }

 private:
  int width_ = 0, height_ = 0, wpr_ = 0;
  std::vector<std::uint64_t> words_;
};

inline BitPlane mask_to_plane(const MaskGrid& m) {
  BitPlane p(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y)) p.set(x, y, true);
  return p;
}

struct IrisCode {
  std::vector<BitPlane> planes;
  BitPlane mask;
  CaptureMeta meta;

  int width() const { return mask.width(); }
  int height() const { return mask.height(); }
  int plane_count() const { return int(planes.size()); }

  void validate() const {
    if (planes.empty()) throw InvalidParam("IrisCode: no planes");
    for (const auto& p : planes)
      if (!p.same_dims(mask)) throw DimensionMismatch("IrisCode: plane dims != mask dims");
  }
};

// Noise floor for binarization: responses this small are rounding residue of
// zero-mean kernels (true zeroes must stay 0 bits), far below any real
// texture response.
inline constexpr double response_epsilon = 1e-12;

// One bit plane per kernel: bit set iff the wrap-x response is strictly
// positive (above the noise floor). Masked texels are neutralized to 0.5
// first so codes depend only on valid texture, and the vertical clamp band of
// the tallest kernel is dropped from the mask.
inline IrisCode encode(const RealGrid& texture, const MaskGrid& mask, const FilterBank& bank,
                       const CaptureMeta& meta = {}) {
  bank.validate();
  if (!mask.same_dims(texture)) throw DimensionMismatch("encode: mask dims != texture dims");
  RealGrid canon = texture;
  for (std::size_t i = 0; i < canon.size(); ++i)
    if (!mask.data()[i]) canon.data()[i] = 0.5;

  IrisCode code;
  code.meta = meta;
  code.planes.reserve(bank.kernels.size());
  for (const auto& k : bank.kernels) {
    const RealGrid resp = convolve2d_wrap_x(canon, k);
    BitPlane plane(texture.width(), texture.height());
    for (int y = 0; y < texture.height(); ++y)
      for (int x = 0; x < texture.width(); ++x)
        if (resp.at(x, y) > response_epsilon) plane.set(x, y, true);
    code.planes.push_back(std::move(plane));
  }

  const int band = bank.max_rows() / 2;
  MaskGrid trimmed = mask;
  for (int y = 0; y < texture.height(); ++y) {
    if (y >= band && y < texture.height() - band) continue;
    for (int x = 0; x < texture.width(); ++x) trimmed.at(x, y) = 0;
  }
  code.mask = mask_to_plane(trimmed);
  return code;
}

inline IrisCode encode(const PolarIris& p, const FilterBank& bank) {
  return encode(p.texture, p.mask, bank, p.meta);
}

inline IrisCode encode(const IrisPatch& p, const FilterBank& bank) {
  return encode(p.texture, p.mask, bank, p.meta);
}

// Mean over codes of the 1-bit fraction among unmasked positions of one plane.
// A fully masked code contributes 0.
inline double mean_code_value(const std::vector<IrisCode>& codes, int filter_index) {
  if (codes.empty()) throw EmptyInput("mean_code_value: no codes");
  double sum = 0.0;
  for (const auto& c : codes) {
    if (filter_index < 0 || filter_index >= c.plane_count())
      throw IndexOutOfRange("mean_code_value: filter_index " + std::to_string(filter_index) +
                            " out of range");
    const auto& plane = c.planes[std::size_t(filter_index)];
    long ones = 0, valid = c.mask.count();
    if (valid > 0) {
      for (std::size_t w = 0; w < plane.words().size(); ++w)
        ones += std::popcount(plane.words()[w] & c.mask.words()[w]);
      sum += double(ones) / double(valid);
    }
  }
  return sum / double(codes.size());
}

namespace detail {

// continuous bit stream, bit index y*W + x, LSB-first within bytes
inline void pack_plane(const BitPlane& p, std::vector<std::uint8_t>& out) {
  const long total = long(p.width()) * p.height();
  const std::size_t base = out.size();
  out.resize(base + std::size_t((total + 7) / 8), 0);
  long idx = 0;
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x, ++idx)
      if (p.get(x, y)) out[base + idx / 8] |= std::uint8_t(1u << (idx % 8));
}

inline BitPlane unpack_plane(const std::uint8_t* bytes, int width, int height) {
  BitPlane p(width, height);
  long idx = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x, ++idx)
      if ((bytes[idx / 8] >> (idx % 8)) & 1u) p.set(x, y, true);
  return p;
}

}  // namespace detail

inline constexpr std::uint8_t pmic_version = 1;

inline std::vector<std::uint8_t> code_to_bytes(const IrisCode& code) {
  code.validate();
  if (code.plane_count() > 255) throw InvalidParam("code_to_bytes: more than 255 planes");
  if (code.width() > 0xffff || code.height() > 0xffff)
    throw InvalidParam("code_to_bytes: dims exceed u16");
  std::vector<std::uint8_t> out = {'P', 'M', 'I', 'C', pmic_version,
                                   std::uint8_t(code.plane_count())};
  out.push_back(std::uint8_t(code.width() & 0xff));
  out.push_back(std::uint8_t(code.width() >> 8));
  out.push_back(std::uint8_t(code.height() & 0xff));
  out.push_back(std::uint8_t(code.height() >> 8));
  detail::pack_plane(code.mask, out);
  for (const auto& p : code.planes) detail::pack_plane(p, out);
  return out;
}

inline IrisCode code_from_bytes(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 10 || bytes[0] != 'P' || bytes[1] != 'M' || bytes[2] != 'I' || bytes[3] != 'C')
    throw UnsupportedFormat("not an iris code file: " + origin);
  if (bytes[4] != pmic_version)
    throw UnsupportedFormat("iris code version " + std::to_string(bytes[4]) + " != " +
                            std::to_string(pmic_version) + ": " + origin);
  const int planes = bytes[5];
  const int width = bytes[6] | (bytes[7] << 8);
  const int height = bytes[8] | (bytes[9] << 8);
  if (planes < 1 || width < 1 || height < 1)
    throw ParseError("iris code header invalid: " + origin);
  const std::size_t plane_bytes = std::size_t((long(width) * height + 7) / 8);
  if (bytes.size() != 10 + plane_bytes * std::size_t(planes + 1))
    throw ParseError("iris code payload size mismatch: " + origin);
  IrisCode code;
  code.mask = detail::unpack_plane(&bytes[10], width, height);
  for (int f = 0; f < planes; ++f)
    code.planes.push_back(detail::unpack_plane(&bytes[10 + plane_bytes * std::size_t(f + 1)],
                                               width, height));
  return code;
}

inline void save_code(const std::string& path, const IrisCode& code) {
  const auto bytes = code_to_bytes(code);
  atomic_write_bytes(path, bytes.data(), bytes.size());
}

inline IrisCode load_code(const std::string& path) {
  return code_from_bytes(read_file_bytes(path), path);
}

}  // namespace pmiris
