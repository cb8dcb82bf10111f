#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/iris_code.hpp"

namespace pmiris {

struct MatchScore {
  double distance = 0.0;
  int best_shift = 0;
  long effective_bits = 0;
};

// Fractional Hamming distance over the mask intersection, minimized across
// circular column shifts of b (rotation compensation). All planes share one
// normalization. Ties go to the smaller |shift|, then to the negative one.
inline MatchScore match(const IrisCode& a, const IrisCode& b, int max_shift = 16,
                        int shift_step = 1, long min_bits = 256) {
  a.validate();
  b.validate();
  if (!a.mask.same_dims(b.mask)) throw DimensionMismatch("match: code dims differ");
  if (a.plane_count() != b.plane_count()) throw DimensionMismatch("match: plane counts differ");
  if (max_shift < 0) throw InvalidParam("match: max_shift must be >= 0");
  if (shift_step < 1) throw InvalidParam("match: shift_step must be >= 1");
  if (min_bits < 1) throw InvalidParam("match: min_bits must be >= 1");

  const int F = a.plane_count();
  bool found = false;
  MatchScore best;
  for (int k = -max_shift / shift_step; k <= max_shift / shift_step; ++k) {
    const int s = k * shift_step;
    const BitPlane mb = b.mask.shifted_columns(s);
    long overlap = 0;
    std::vector<std::uint64_t> inter(mb.words().size());
    for (std::size_t w = 0; w < inter.size(); ++w) {
      inter[w] = a.mask.words()[w] & mb.words()[w];
      overlap += std::popcount(inter[w]);
    }
    const long effective = overlap * F;
    if (effective < min_bits) continue;
    long diff = 0;
    for (int f = 0; f < F; ++f) {
      const BitPlane pb = b.planes[std::size_t(f)].shifted_columns(s);
      const auto& pa = a.planes[std::size_t(f)].words();
      for (std::size_t w = 0; w < inter.size(); ++w)
        diff += std::popcount((pa[w] ^ pb.words()[w]) & inter[w]);
    }
    const double d = double(diff) / double(effective);
    const bool better =
        !found || d < best.distance ||
        (d == best.distance &&
         (std::abs(s) < std::abs(best.best_shift) ||
          (std::abs(s) == std::abs(best.best_shift) && s < best.best_shift)));
    if (better) {
      found = true;
      best = {d, s, effective};
    }
  }
  if (!found)
    throw InsufficientOverlap("match: no shift reaches " + std::to_string(min_bits) +
                              " comparable bits");
  return best;
}

}  // namespace pmiris
