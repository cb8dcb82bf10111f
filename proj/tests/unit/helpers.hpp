#pragma once

// Shared independent reference implementations for oracle checks. These stay
// deliberately naive: direct loops straight from the definitions, no reuse of
// library internals.

#include <pmiris/convolve.hpp>
#include <pmiris/grid.hpp>
#include <pmiris/rng.hpp>

#include <cmath>
#include <vector>

namespace testref {

// direct quadruple loop with wrap-x / clamp-y boundary handling
inline pmiris::RealGrid naive_convolve(const pmiris::RealGrid& img, const pmiris::Kernel2D& k) {
    const int w = img.width(), h = img.height();
    const int cy = k.rows / 2, cx = k.cols / 2;
    pmiris::RealGrid out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k.rows; ++ky)
                for (int kx = 0; kx < k.cols; ++kx) {
                    int sy = y + ky - cy;
                    sy = sy < 0 ? 0 : (sy >= h ? h - 1 : sy);
                    int sx = (x + kx - cx) % w;
                    if (sx < 0) sx += w;
                    acc += k.at(ky, kx) * img.at(sx, sy);
                }
            out.at(x, y) = acc;
        }
    return out;
}

inline pmiris::RealGrid random_grid(pmiris::Rng& rng, int w, int h, double lo = -1.0,
                                    double hi = 1.0) {
    pmiris::RealGrid g(w, h);
    for (auto& v : g.data()) v = rng.uniform(lo, hi);
    return g;
}

inline pmiris::Kernel2D random_kernel(pmiris::Rng& rng, int rows, int cols,
                                      const std::string& label = "probe") {
    std::vector<double> w(std::size_t(rows) * cols);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    return pmiris::Kernel2D(rows, cols, std::move(w), pmiris::Provenance::gabor, label);
}

}  // namespace testref
