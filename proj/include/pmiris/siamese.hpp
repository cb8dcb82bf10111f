#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "pmiris/convolve.hpp"
#include "pmiris/error.hpp"
#include "pmiris/filter_bank.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/image_io.hpp"
#include "pmiris/polar.hpp"
#include "pmiris/rng.hpp"

namespace pmiris {

enum class Activation { relu, identity };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ParseError("activation must be \"relu\" or \"identity\", got \"" + s + "\"");
}

// Two weight-shared convolution branches, elementwise L1 merge, one sigmoid
// neuron on top. Sizes are runtime so reduced models can be probed directly.
struct SiameseModel {
  int n_kernels = 6;
  int kernel_rows = 9;
  int kernel_cols = 15;
  int input_width = 256;
  int input_height = 64;
  Activation activation = Activation::relu;
  std::vector<double> kernels;        // [f][ky][kx]
  std::vector<double> kernel_biases;  // [f]
  std::vector<double> head_weights;   // [f][y][x]
  double head_bias = 0.0;

  long map_size() const { return long(input_width) * input_height; }
  long kernel_size() const { return long(kernel_rows) * kernel_cols; }
  long head_size() const { return n_kernels * map_size(); }
  long param_count() const { return n_kernels * kernel_size() + n_kernels + head_size() + 1; }

  void validate() const {
    if (n_kernels < 1) throw InvalidParam("SiameseModel: n_kernels must be >= 1");
    if (kernel_rows < 1 || kernel_cols < 1 || kernel_rows % 2 == 0 || kernel_cols % 2 == 0)
      throw InvalidParam("SiameseModel: kernel dims must be odd and positive");
    if (input_width < 1 || input_height < 1)
      throw InvalidParam("SiameseModel: input dims must be positive");
    if (long(kernels.size()) != n_kernels * kernel_size())
      throw InvalidParam("SiameseModel: kernel weight count mismatch");
    if (long(kernel_biases.size()) != n_kernels)
      throw InvalidParam("SiameseModel: bias count mismatch");
    if (long(head_weights.size()) != head_size())
      throw InvalidParam("SiameseModel: head weight count mismatch");
  }
};

inline SiameseModel make_siamese_model(int n_kernels = 6, int kernel_rows = 9,
                                       int kernel_cols = 15, int input_width = patch_width,
                                       int input_height = polar_height,
                                       Activation act = Activation::relu) {
  SiameseModel m;
  m.n_kernels = n_kernels;
  m.kernel_rows = kernel_rows;
  m.kernel_cols = kernel_cols;
  m.input_width = input_width;
  m.input_height = input_height;
  m.activation = act;
  m.kernels.assign(std::size_t(n_kernels) * kernel_rows * kernel_cols, 0.0);
  m.kernel_biases.assign(std::size_t(n_kernels), 0.0);
  m.head_weights.assign(std::size_t(m.head_size()), 0.0);
  m.validate();
  return m;
}

// Gaussian fan-in scaling for the conv kernels and head; biases start at zero.
inline void init_weights(SiameseModel& m, Rng& rng) {
  const double ks = 1.0 / std::sqrt(double(m.kernel_size()));
  for (auto& w : m.kernels) w = ks * rng.normal();
  std::fill(m.kernel_biases.begin(), m.kernel_biases.end(), 0.0);
  const double hs = 1.0 / std::sqrt(double(m.head_size()));
  for (auto& w : m.head_weights) w = hs * rng.normal();
  m.head_bias = 0.0;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Binary cross-entropy, 0 = perfect match, 1 = perfect non-match.
inline double loss(double score, int label) {
  const double eps = 1e-12;
  const double s = std::min(std::max(score, eps), 1.0 - eps);
  return -(label * std::log(s) + (1 - label) * std::log(1.0 - s));
}

struct ForwardCache {
  double score = 0.0;
  std::vector<double> a1, a2;  // post-activation branch maps, [f][y][x]
  RealGrid x1{1, 1}, x2{1, 1};
};

namespace detail {

// same boundary policy as the encoder: wrap columns, clamp rows
inline void branch_maps(const SiameseModel& m, const RealGrid& x, std::vector<double>& out) {
  const int W = m.input_width, H = m.input_height;
  const int cy = m.kernel_rows / 2, cx = m.kernel_cols / 2;
  out.assign(std::size_t(m.n_kernels) * H * W, 0.0);
  for (int f = 0; f < m.n_kernels; ++f) {
    const double* kw = &m.kernels[std::size_t(f) * m.kernel_size()];
    double* map = &out[std::size_t(f) * H * W];
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        double acc = m.kernel_biases[std::size_t(f)];
        for (int ky = 0; ky < m.kernel_rows; ++ky) {
          const int row = clamp_index(y + ky - cy, H);
          for (int kx = 0; kx < m.kernel_cols; ++kx)
            acc += kw[ky * m.kernel_cols + kx] * x.at(wrap_index(xx + kx - cx, W), row);
        }
        if (m.activation == Activation::relu && acc < 0.0) acc = 0.0;
        map[std::size_t(y) * W + xx] = acc;
      }
  }
}

}  // namespace detail

inline ForwardCache forward(const SiameseModel& m, const RealGrid& x1, const RealGrid& x2) {
  m.validate();
  if (x1.width() != m.input_width || x1.height() != m.input_height || !x1.same_dims(x2))
    throw DimensionMismatch("forward: patch dims must be " + std::to_string(m.input_width) + "x" +
                            std::to_string(m.input_height));
  ForwardCache c;
  detail::branch_maps(m, x1, c.a1);
  detail::branch_maps(m, x2, c.a2);
  double z = m.head_bias;
  for (std::size_t i = 0; i < c.a1.size(); ++i)
    z += m.head_weights[i] * std::abs(c.a1[i] - c.a2[i]);
  c.score = sigmoid(z);
  c.x1 = x1;
  c.x2 = x2;
  return c;
}

struct Gradients {
  std::vector<double> kernels, kernel_biases, head_weights;
  double head_bias = 0.0;
};

// Analytic gradients of the cross-entropy loss; L1 subgradient is 0 at ties,
// ReLU subgradient 0 at 0.
inline Gradients backward(const SiameseModel& m, const ForwardCache& c, int label) {
  const double g = c.score - label;  // dL/dz through sigmoid + BCE
  Gradients out;
  out.kernels.assign(m.kernels.size(), 0.0);
  out.kernel_biases.assign(m.kernel_biases.size(), 0.0);
  out.head_weights.assign(m.head_weights.size(), 0.0);
  out.head_bias = g;

  const int W = m.input_width, H = m.input_height;
  const int cy = m.kernel_rows / 2, cx = m.kernel_cols / 2;
  std::vector<double> u1(c.a1.size()), u2(c.a1.size());
  for (std::size_t i = 0; i < c.a1.size(); ++i) {
    const double d = c.a1[i] - c.a2[i];
    out.head_weights[i] = g * std::abs(d);
    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    const double up = g * m.head_weights[i] * s;
    u1[i] = up;
    u2[i] = -up;
  }
  for (int branch = 0; branch < 2; ++branch) {
    const auto& a = branch == 0 ? c.a1 : c.a2;
    const auto& u = branch == 0 ? u1 : u2;
    const RealGrid& x = branch == 0 ? c.x1 : c.x2;
    for (int f = 0; f < m.n_kernels; ++f) {
      double* dk = &out.kernels[std::size_t(f) * m.kernel_size()];
      const double* af = &a[std::size_t(f) * H * W];
      const double* uf = &u[std::size_t(f) * H * W];
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double gm = uf[std::size_t(y) * W + xx];
          if (m.activation == Activation::relu && af[std::size_t(y) * W + xx] <= 0.0) gm = 0.0;
          if (gm == 0.0) continue;
          out.kernel_biases[std::size_t(f)] += gm;
          for (int ky = 0; ky < m.kernel_rows; ++ky) {
            const int row = detail::clamp_index(y + ky - cy, H);
            for (int kx = 0; kx < m.kernel_cols; ++kx)
              dk[ky * m.kernel_cols + kx] += gm * x.at(detail::wrap_index(xx + kx - cx, W), row);
          }
        }
    }
  }
  return out;
}

struct PairRef {
  int a = 0;
  int b = 0;
  int label = 0;  // 0 genuine, 1 impostor
};

struct TrainConfig {
  long iterations = 20000;
  int batch_pairs = 32;  // half genuine, half impostor
  double lr = 0.0006;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (iterations < 1) throw InvalidParam("TrainConfig: iterations must be >= 1");
    if (batch_pairs < 2 || batch_pairs % 2 != 0)
      throw InvalidParam("TrainConfig: batch_pairs must be even and >= 2");
    if (!(lr > 0.0)) throw InvalidParam("TrainConfig: lr must be > 0");
  }
};

struct TrainResult {
  SiameseModel model;
  std::vector<double> loss_history;
};

namespace detail {

#if defined(__AVX512F__)
inline float reduce_dot_absdiff(const float* w, const float* a, const float* b, long n) {
  __m512 acc = _mm512_setzero_ps();
  long i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 d = _mm512_abs_ps(_mm512_sub_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(w + i), d, acc);
  }
  float s = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) s += w[i] * std::abs(a[i] - b[i]);
  return s;
}

inline float reduce_sum(const float* p, long n) {
  __m512 acc = _mm512_setzero_ps();
  long i = 0;
  for (; i + 16 <= n; i += 16) acc = _mm512_add_ps(acc, _mm512_loadu_ps(p + i));
  float s = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) s += p[i];
  return s;
}
#else
inline float reduce_dot_absdiff(const float* w, const float* a, const float* b, long n) {
  float s = 0.0f;
  for (long i = 0; i < n; ++i) s += w[i] * std::abs(a[i] - b[i]);
  return s;
}

inline float reduce_sum(const float* p, long n) {
  float s = 0.0f;
  for (long i = 0; i < n; ++i) s += p[i];
  return s;
}
#endif

// Single-precision batch engine. Patches are stored once with wrap-x padding;
// each batch runs the convolution once per distinct patch, and kernel
// gradients reuse the same padded rows.
class TrainEngine {
 public:
  TrainEngine(const SiameseModel& m, const std::vector<RealGrid>& patches)
      : F(m.n_kernels), KR(m.kernel_rows), KC(m.kernel_cols), W(m.input_width),
        H(m.input_height), PW(m.input_width + m.kernel_cols - 1), relu_(m.activation ==
        Activation::relu) {
    map_stride = long(H) * W;
    for (const auto& p : patches)
      if (p.width() != W || p.height() != H)
        throw DimensionMismatch("TrainEngine: patch dims must be " + std::to_string(W) + "x" +
                                std::to_string(H));
    const int cx = KC / 2;
    padded.assign(std::size_t(patches.size()) * H * PW, 0.0f);
    for (std::size_t p = 0; p < patches.size(); ++p)
      for (int y = 0; y < H; ++y) {
        float* row = &padded[(p * H + y) * PW];
        for (int px = 0; px < PW; ++px)
          row[px] = float(patches[p].at(wrap_index(px - cx, W), y));
      }
    n_patches = int(patches.size());
    bscratch_.assign(std::size_t(2) * KR * KC, 0.0f);
  }

  int patch_count() const { return n_patches; }

  // post-activation maps for one patch -> out[F][H][W]
  void conv_forward(const float* kw, const float* bias, int patch, float* out) const {
    const float* pad = &padded[std::size_t(patch) * H * PW];
#if defined(__AVX512F__)
    if (W % 32 == 0 && F <= 8) {
      conv_forward_avx512(pad, kw, bias, out);
      return;
    }
#endif
    const int cy = KR / 2;
    for (int f = 0; f < F; ++f) {
      float* map = out + std::size_t(f) * map_stride;
      for (int y = 0; y < H; ++y) {
        float* orow = map + std::size_t(y) * W;
        for (int x = 0; x < W; ++x) orow[x] = bias[f];
        for (int ky = 0; ky < KR; ++ky) {
          const float* prow = pad + std::size_t(clamp_index(y + ky - cy, H)) * PW;
          const float* krow = kw + (std::size_t(f) * KR + ky) * KC;
          for (int kx = 0; kx < KC; ++kx)
            for (int x = 0; x < W; ++x) orow[x] += krow[kx] * prow[x + kx];
        }
        if (relu_)
          for (int x = 0; x < W; ++x) orow[x] = orow[x] > 0.0f ? orow[x] : 0.0f;
      }
    }
  }

  // dK += corr(padded patch, G), dbias += sum(G); G = upstream masked by ReLU
  void conv_backward(int patch, const float* g, float* dk, float* dbias) const {
    const float* pad = &padded[std::size_t(patch) * H * PW];
    for (int f = 0; f < F; ++f)
      dbias[f] += reduce_sum(g + std::size_t(f) * map_stride, map_stride);
#if defined(__AVX512F__)
    if (W % 16 == 0 && KC <= 63) {
      conv_backward_avx512(pad, g, dk);
      return;
    }
#endif
    const int cy = KR / 2;
    for (int f = 0; f < F; ++f) {
      const float* gf = g + std::size_t(f) * map_stride;
      float* dkf = dk + (std::size_t(f) * KR) * KC;
      for (int ky = 0; ky < KR; ++ky)
        for (int y = 0; y < H; ++y) {
          const float* prow = pad + std::size_t(clamp_index(y + ky - cy, H)) * PW;
          const float* grow = gf + std::size_t(y) * W;
          for (int kx = 0; kx < KC; ++kx) {
            float acc = 0.0f;
            for (int x = 0; x < W; ++x) acc += grow[x] * prow[x + kx];
            dkf[ky * KC + kx] += acc;
          }
        }
    }
  }

  const int F, KR, KC, W, H, PW;
  long map_stride;

 private:
  bool relu_;
  int n_patches = 0;
  std::vector<float> padded;
  // per-pair tap accumulators for the strip backward; engine is single-threaded
  mutable std::vector<float> bscratch_;

#if defined(__AVX512F__)
  // FT fixed at compile time keeps the accumulator array in registers
  template <int FT>
  void conv_forward_avx512_t(const float* pad, const float* kw, const float* bias,
                             float* out) const {
    const int cy = KR / 2;
    __m512 acc[FT][2];
    for (int y = 0; y < H; ++y) {
      for (int x0 = 0; x0 < W; x0 += 32) {
        for (int f = 0; f < FT; ++f) acc[f][0] = acc[f][1] = _mm512_set1_ps(bias[f]);
        for (int ky = 0; ky < KR; ++ky) {
          const float* base = pad + std::size_t(clamp_index(y + ky - cy, H)) * PW + x0;
          for (int kx = 0; kx < KC; ++kx) {
            const __m512 v0 = _mm512_loadu_ps(base + kx);
            const __m512 v1 = _mm512_loadu_ps(base + kx + 16);
            for (int f = 0; f < FT; ++f) {
              const __m512 w = _mm512_set1_ps(kw[(std::size_t(f) * KR + ky) * KC + kx]);
              acc[f][0] = _mm512_fmadd_ps(v0, w, acc[f][0]);
              acc[f][1] = _mm512_fmadd_ps(v1, w, acc[f][1]);
            }
          }
        }
        const __m512 zero = _mm512_setzero_ps();
        for (int f = 0; f < FT; ++f) {
          __m512 r0 = acc[f][0], r1 = acc[f][1];
          if (relu_) {
            r0 = _mm512_max_ps(r0, zero);
            r1 = _mm512_max_ps(r1, zero);
          }
          float* dst = out + std::size_t(f) * map_stride + std::size_t(y) * W + x0;
          _mm512_storeu_ps(dst, r0);
          _mm512_storeu_ps(dst + 16, r1);
        }
      }
    }
  }

  void conv_forward_avx512(const float* pad, const float* kw, const float* bias,
                           float* out) const {
    switch (F) {
      case 1: conv_forward_avx512_t<1>(pad, kw, bias, out); break;
      case 2: conv_forward_avx512_t<2>(pad, kw, bias, out); break;
      case 3: conv_forward_avx512_t<3>(pad, kw, bias, out); break;
      case 4: conv_forward_avx512_t<4>(pad, kw, bias, out); break;
      case 5: conv_forward_avx512_t<5>(pad, kw, bias, out); break;
      case 6: conv_forward_avx512_t<6>(pad, kw, bias, out); break;
      case 7: conv_forward_avx512_t<7>(pad, kw, bias, out); break;
      default: conv_forward_avx512_t<8>(pad, kw, bias, out); break;
    }
  }

  // one ky-row of taps for a kernel pair over a strip of map rows; HN and TWO
  // fixed at compile time keep the sliding accumulators in registers
  template <int HN, bool TWO>
  void conv_backward_block(const float* pad, const float* g1, const float* g2, int ky, int h0,
                           int y0, int y1, float* acc1_out, float* acc2_out) const {
    const int cy = KR / 2;
    __m512 acc1[HN], acc2[HN];
    for (int k = 0; k < HN; ++k) acc1[k] = acc2[k] = _mm512_setzero_ps();
    for (int y = y0; y < y1; ++y) {
      const float* prow = pad + std::size_t(clamp_index(y + ky - cy, H)) * PW + h0;
      const float* gr1 = g1 + std::size_t(y) * W;
      const float* gr2 = TWO ? g2 + std::size_t(y) * W : nullptr;
      if (y + 1 < y1) {
        // warm the next row set while this one computes
        const float* np = pad + std::size_t(clamp_index(y + 1 + ky - cy, H)) * PW + h0;
        const float* ng1 = g1 + std::size_t(y + 1) * W;
        for (int q = 0; q < W; q += 32) {
          _mm_prefetch(reinterpret_cast<const char*>(np + q), _MM_HINT_T0);
          _mm_prefetch(reinterpret_cast<const char*>(ng1 + q), _MM_HINT_T0);
          if (TWO) _mm_prefetch(reinterpret_cast<const char*>(g2 + std::size_t(y + 1) * W + q), _MM_HINT_T0);
        }
      }
      for (int x = 0; x < W; x += 16) {
        const __m512 gv1 = _mm512_loadu_ps(gr1 + x);
        if (TWO) {
          const __m512 gv2 = _mm512_loadu_ps(gr2 + x);
          for (int k = 0; k < HN; ++k) {
            const __m512 pv = _mm512_loadu_ps(prow + x + k);
            acc1[k] = _mm512_fmadd_ps(gv1, pv, acc1[k]);
            acc2[k] = _mm512_fmadd_ps(gv2, pv, acc2[k]);
          }
        } else {
          for (int k = 0; k < HN; ++k) {
            const __m512 pv = _mm512_loadu_ps(prow + x + k);
            acc1[k] = _mm512_fmadd_ps(gv1, pv, acc1[k]);
          }
        }
      }
    }
    for (int k = 0; k < HN; ++k) {
      acc1_out[k] += _mm512_reduce_add_ps(acc1[k]);
      if (TWO) acc2_out[k] += _mm512_reduce_add_ps(acc2[k]);
    }
  }

  template <bool TWO>
  void conv_backward_row(const float* pad, const float* g1, const float* g2, int ky, int h0,
                         int hn, int y0, int y1, float* acc1_out, float* acc2_out) const {
    switch (hn) {
      case 1: conv_backward_block<1, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 2: conv_backward_block<2, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 3: conv_backward_block<3, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 4: conv_backward_block<4, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 5: conv_backward_block<5, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 6: conv_backward_block<6, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      case 7: conv_backward_block<7, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
      default: conv_backward_block<8, TWO>(pad, g1, g2, ky, h0, y0, y1, acc1_out, acc2_out); break;
    }
  }

  // kernel pairs share the padded-row loads, kx runs in blocks of 8 sliding
  // accumulators, and 8-row strips keep the touched g and pad rows hot
  void conv_backward_avx512(const float* pad, const float* g, float* dk) const {
    const int strip = 8;
    for (int f0 = 0; f0 < F; f0 += 2) {
      const bool two = f0 + 1 < F;
      const float* g1 = g + std::size_t(f0) * map_stride;
      const float* g2 = two ? g + std::size_t(f0 + 1) * map_stride : nullptr;
      std::fill(bscratch_.begin(), bscratch_.end(), 0.0f);
      float* acc1 = bscratch_.data();
      float* acc2 = bscratch_.data() + KR * KC;
      for (int y0 = 0; y0 < H; y0 += strip) {
        const int y1 = std::min(y0 + strip, H);
        for (int ky = 0; ky < KR; ++ky)
          for (int h0 = 0; h0 < KC; h0 += 8) {
            const int hn = std::min(8, KC - h0);
            if (two)
              conv_backward_row<true>(pad, g1, g2, ky, h0, hn, y0, y1, acc1 + ky * KC + h0,
                                      acc2 + ky * KC + h0);
            else
              conv_backward_row<false>(pad, g1, g2, ky, h0, hn, y0, y1, acc1 + ky * KC + h0,
                                       nullptr);
          }
      }
      float* dk1 = dk + (std::size_t(f0) * KR) * KC;
      for (long i = 0; i < long(KR) * KC; ++i) dk1[i] += acc1[i];
      if (two) {
        float* dk2 = dk + (std::size_t(f0 + 1) * KR) * KC;
        for (long i = 0; i < long(KR) * KC; ++i) dk2[i] += acc2[i];
      }
    }
  }
#endif
};

struct FlatParams {
  std::vector<float> values, grads, adam_m, adam_v;
  long n_kernel = 0, n_bias = 0, n_head = 0;

  void init_from(const SiameseModel& m) {
    n_kernel = long(m.kernels.size());
    n_bias = long(m.kernel_biases.size());
    n_head = long(m.head_weights.size());
    const long total = n_kernel + n_bias + n_head + 1;
    values.resize(std::size_t(total));
    long i = 0;
    for (double v : m.kernels) values[std::size_t(i++)] = float(v);
    for (double v : m.kernel_biases) values[std::size_t(i++)] = float(v);
    for (double v : m.head_weights) values[std::size_t(i++)] = float(v);
    values[std::size_t(i)] = float(m.head_bias);
    grads.assign(values.size(), 0.0f);
    adam_m.assign(values.size(), 0.0f);
    adam_v.assign(values.size(), 0.0f);
  }

  void store_to(SiameseModel& m) const {
    long i = 0;
    for (auto& v : m.kernels) v = values[std::size_t(i++)];
    for (auto& v : m.kernel_biases) v = values[std::size_t(i++)];
    for (auto& v : m.head_weights) v = values[std::size_t(i++)];
    m.head_bias = values[std::size_t(i)];
  }

  float* kernel_ptr() { return values.data(); }
  float* bias_ptr() { return values.data() + n_kernel; }
  float* head_ptr() { return values.data() + n_kernel + n_bias; }
  float* head_bias_ptr() { return values.data() + n_kernel + n_bias + n_head; }
  float* g_kernel_ptr() { return grads.data(); }
  float* g_bias_ptr() { return grads.data() + n_kernel; }
  float* g_head_ptr() { return grads.data() + n_kernel + n_bias; }
  float* g_head_bias_ptr() { return grads.data() + n_kernel + n_bias + n_head; }

  void adam_step(long t, const TrainConfig& cfg) {
    const float b1 = float(cfg.adam_beta1), b2 = float(cfg.adam_beta2);
    const float corr1 = 1.0f / (1.0f - std::pow(b1, float(t)));
    const float corr2 = 1.0f / (1.0f - std::pow(b2, float(t)));
    const float lr = float(cfg.lr), eps = float(cfg.adam_eps);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float g = grads[i];
      adam_m[i] = b1 * adam_m[i] + (1.0f - b1) * g;
      adam_v[i] = b2 * adam_v[i] + (1.0f - b2) * g * g;
      values[i] -= lr * (adam_m[i] * corr1) / (std::sqrt(adam_v[i] * corr2) + eps);
    }
  }
};

}  // namespace detail

// ADAM training over half-genuine/half-impostor batches resampled from the
// pool every iteration. Deterministic for a fixed seed.
inline TrainResult train(const SiameseModel& init, const std::vector<RealGrid>& patches,
                         const std::vector<PairRef>& pairs, const TrainConfig& cfg) {
  init.validate();
  cfg.validate();
  std::vector<int> genuine, impostor;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.a < 0 || p.a >= int(patches.size()) || p.b < 0 || p.b >= int(patches.size()))
      throw IndexOutOfRange("train: pair references missing patch");
    (p.label == 0 ? genuine : impostor).push_back(int(i));
  }
  const int half = cfg.batch_pairs / 2;
  if (int(genuine.size()) < half || int(impostor.size()) < half)
    throw InsufficientPairs("train: need >= " + std::to_string(half) + " genuine and " +
                            std::to_string(half) + " impostor pairs, have " +
                            std::to_string(genuine.size()) + "/" +
                            std::to_string(impostor.size()));

  detail::TrainEngine eng(init, patches);
  detail::FlatParams params;
  params.init_from(init);
  Rng rng(cfg.seed);

  const long ms = eng.map_stride;
  const long branch = long(init.n_kernels) * ms;
  std::vector<float> maps(std::size_t(cfg.batch_pairs) * 2 * branch);
  std::vector<float> upstream(std::size_t(cfg.batch_pairs) * 2 * branch);
  std::vector<int> slot_patch(std::size_t(cfg.batch_pairs) * 2);
  std::vector<int> patch_slot(patches.size());
  std::vector<std::pair<int, int>> batch_slots(std::size_t(cfg.batch_pairs));
  std::vector<int> batch_label(std::size_t(cfg.batch_pairs));
  std::vector<double> history;
  history.reserve(std::size_t(cfg.iterations));

  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    rng.partial_shuffle(genuine, std::size_t(half));
    rng.partial_shuffle(impostor, std::size_t(half));

    // distinct patches of this batch get one conv slot each
    std::fill(patch_slot.begin(), patch_slot.end(), -1);
    int n_slots = 0;
    auto slot_of = [&](int patch) {
      if (patch_slot[std::size_t(patch)] < 0) {
        patch_slot[std::size_t(patch)] = n_slots;
        slot_patch[std::size_t(n_slots)] = patch;
        ++n_slots;
      }
      return patch_slot[std::size_t(patch)];
    };
    for (int b = 0; b < cfg.batch_pairs; ++b) {
      const PairRef& pr = pairs[std::size_t(b < half ? genuine[std::size_t(b)]
                                                     : impostor[std::size_t(b - half)])];
      batch_slots[std::size_t(b)] = {slot_of(pr.a), slot_of(pr.b)};
      batch_label[std::size_t(b)] = pr.label;
    }

    for (int s = 0; s < n_slots; ++s)
      eng.conv_forward(params.kernel_ptr(), params.bias_ptr(), slot_patch[std::size_t(s)],
                       &maps[std::size_t(s) * branch]);

    std::fill(params.grads.begin(), params.grads.end(), 0.0f);
    std::fill(upstream.begin(), upstream.begin() + std::size_t(n_slots) * branch, 0.0f);
    const float* hw = params.head_ptr();
    float* ghw = params.g_head_ptr();
    double loss_sum = 0.0;
    const double inv_b = 1.0 / cfg.batch_pairs;
    for (int b = 0; b < cfg.batch_pairs; ++b) {
      const float* a1 = &maps[std::size_t(batch_slots[std::size_t(b)].first) * branch];
      const float* a2 = &maps[std::size_t(batch_slots[std::size_t(b)].second) * branch];
      const double z = double(detail::reduce_dot_absdiff(hw, a1, a2, branch)) +
                       double(*params.head_bias_ptr());
      const double score = sigmoid(z);
      const int label = batch_label[std::size_t(b)];
      loss_sum += loss(score, label);
      const float g = float((score - label) * inv_b);
      *params.g_head_bias_ptr() += g;
      float* u1 = &upstream[std::size_t(batch_slots[std::size_t(b)].first) * branch];
      float* u2 = &upstream[std::size_t(batch_slots[std::size_t(b)].second) * branch];
      for (long i = 0; i < branch; ++i) {
        const float d = a1[i] - a2[i];
        ghw[i] += g * std::abs(d);
        const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
        const float up = g * hw[i] * s;
        u1[i] += up;
        u2[i] -= up;
      }
    }

    for (int s = 0; s < n_slots; ++s) {
      float* u = &upstream[std::size_t(s) * branch];
      if (init.activation == Activation::relu) {
        const float* a = &maps[std::size_t(s) * branch];
        for (long i = 0; i < branch; ++i)
          if (a[i] <= 0.0f) u[i] = 0.0f;
      }
      eng.conv_backward(slot_patch[std::size_t(s)], u, params.g_kernel_ptr(),
                        params.g_bias_ptr());
    }

    params.adam_step(iter, cfg);
    history.push_back(loss_sum * inv_b);
  }

  TrainResult res;
  res.model = init;
  params.store_to(res.model);
  res.loss_history = std::move(history);
  return res;
}

// Engine-based scoring for pair lists (evaluation of held-out pools); patches
// are convolved once per chunk.
inline std::vector<double> batch_scores(const SiameseModel& m,
                                        const std::vector<RealGrid>& patches,
                                        const std::vector<PairRef>& pairs) {
  m.validate();
  detail::TrainEngine eng(m, patches);
  detail::FlatParams params;
  params.init_from(m);
  const long branch = long(m.n_kernels) * eng.map_stride;

  const int max_slots = 64;
  std::vector<float> maps(std::size_t(max_slots) * branch);
  std::vector<double> scores(pairs.size());
  std::vector<int> patch_slot(patches.size(), -1);
  std::vector<int> used;

  std::size_t start = 0;
  while (start < pairs.size()) {
    for (int p : used) patch_slot[std::size_t(p)] = -1;
    used.clear();
    std::size_t end = start;
    while (end < pairs.size()) {
      const auto& pr = pairs[end];
      int need = 0;
      if (patch_slot[std::size_t(pr.a)] < 0) ++need;
      if (pr.b != pr.a && patch_slot[std::size_t(pr.b)] < 0) ++need;
      if (int(used.size()) + need > max_slots) break;
      for (int p : {pr.a, pr.b})
        if (patch_slot[std::size_t(p)] < 0) {
          patch_slot[std::size_t(p)] = int(used.size());
          used.push_back(p);
          eng.conv_forward(params.kernel_ptr(), params.bias_ptr(), p,
                           &maps[std::size_t(patch_slot[std::size_t(p)]) * branch]);
        }
      ++end;
    }
    for (std::size_t i = start; i < end; ++i) {
      const float* a1 = &maps[std::size_t(patch_slot[std::size_t(pairs[i].a)]) * branch];
      const float* a2 = &maps[std::size_t(patch_slot[std::size_t(pairs[i].b)]) * branch];
      const double z = double(detail::reduce_dot_absdiff(params.head_ptr(), a1, a2, branch)) +
                       double(*params.head_bias_ptr());
      scores[i] = sigmoid(z);
    }
    start = end;
  }
  return scores;
}

struct TrainSet {
  std::vector<RealGrid> patches;
  std::vector<CaptureMeta> meta;
  std::vector<PatchSide> sides;
  std::vector<PairRef> pairs;
};

// All same-side patch pairs; genuine iff subject and eye both match.
inline TrainSet build_pair_pool(const std::vector<IrisPatch>& patches) {
  TrainSet set;
  for (const auto& p : patches) {
    set.patches.push_back(p.texture);
    set.meta.push_back(p.meta);
    set.sides.push_back(p.side);
  }
  for (std::size_t i = 0; i < patches.size(); ++i)
    for (std::size_t j = i + 1; j < patches.size(); ++j) {
      if (set.sides[i] != set.sides[j]) continue;
      const bool genuine = same_eye_identity(set.meta[i], set.meta[j]);
      set.pairs.push_back({int(i), int(j), genuine ? 0 : 1});
    }
  return set;
}

// The learned kernels, mean-subtracted, as encoder filters.
inline std::vector<Kernel2D> extract_kernels(const SiameseModel& m) {
  m.validate();
  std::vector<Kernel2D> out;
  for (int f = 0; f < m.n_kernels; ++f) {
    std::vector<double> w(m.kernels.begin() + f * m.kernel_size(),
                          m.kernels.begin() + (f + 1) * m.kernel_size());
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= double(w.size());
    for (auto& v : w) v -= mean;
    out.emplace_back(m.kernel_rows, m.kernel_cols, std::move(w), Provenance::learned,
                     "learned-" + std::to_string(f + 1));
  }
  return out;
}

inline nlohmann::ordered_json checkpoint_to_json(const SiameseModel& m, const TrainConfig& cfg,
                                                 long iteration) {
  m.validate();
  nlohmann::ordered_json j;
  j["model"] = {{"n_kernels", m.n_kernels},
                {"kernel_rows", m.kernel_rows},
                {"kernel_cols", m.kernel_cols},
                {"input_width", m.input_width},
                {"input_height", m.input_height},
                {"activation", to_string(m.activation)},
                {"kernels", m.kernels},
                {"kernel_biases", m.kernel_biases},
                {"head_weights", m.head_weights},
                {"head_bias", m.head_bias}};
  j["config"] = {{"iterations", cfg.iterations}, {"batch_pairs", cfg.batch_pairs},
                 {"lr", cfg.lr},                 {"adam_beta1", cfg.adam_beta1},
                 {"adam_beta2", cfg.adam_beta2}, {"adam_eps", cfg.adam_eps},
                 {"seed", cfg.seed}};
  j["iteration"] = iteration;
  return j;
}

struct Checkpoint {
  SiameseModel model;
  TrainConfig config;
  long iteration = 0;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  try {
    const auto& jm = j.at("model");
    c.model = make_siamese_model(jm.at("n_kernels").get<int>(), jm.at("kernel_rows").get<int>(),
                                 jm.at("kernel_cols").get<int>(), jm.at("input_width").get<int>(),
                                 jm.at("input_height").get<int>(),
                                 activation_from_string(jm.at("activation").get<std::string>()));
    c.model.kernels = jm.at("kernels").get<std::vector<double>>();
    c.model.kernel_biases = jm.at("kernel_biases").get<std::vector<double>>();
    c.model.head_weights = jm.at("head_weights").get<std::vector<double>>();
    c.model.head_bias = jm.at("head_bias").get<double>();
    const auto& jc = j.at("config");
    c.config.iterations = jc.at("iterations").get<long>();
    c.config.batch_pairs = jc.at("batch_pairs").get<int>();
    c.config.lr = jc.at("lr").get<double>();
    c.config.adam_beta1 = jc.at("adam_beta1").get<double>();
    c.config.adam_beta2 = jc.at("adam_beta2").get<double>();
    c.config.adam_eps = jc.at("adam_eps").get<double>();
    c.config.seed = jc.at("seed").get<std::uint64_t>();
    c.iteration = j.at("iteration").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
  c.model.validate();
  return c;
}

inline void save_checkpoint(const std::string& path, const SiameseModel& m,
                            const TrainConfig& cfg, long iteration) {
  atomic_write_text(path, checkpoint_to_json(m, cfg, iteration).dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return checkpoint_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

inline std::string loss_history_csv(const std::vector<double>& history) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out += std::to_string(i + 1) + "," + format_real(history[i]) + "\n";
  return out;
}

}  // namespace pmiris
