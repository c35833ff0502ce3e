#include <algorithm>
#include <atomic>
#include <limits>
#include <vector>

#include "deblur/kernels.hpp"

namespace deblur::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};

constexpr std::size_t kRowBlock = 4;     // output rows sharing one pass over the packed input
constexpr std::size_t kColBlock = 256;   // pixels per L1-resident strip
constexpr std::size_t kDepthBlock = 512; // weight-gradient columns per strip

// Packs one batch item into col[(c * k + ky) * k + kx][i * out_w + j].
void im2col(const ConvGeometry& g, const Real* x, Real* col) {
  const std::size_t k = g.kernel;
  const std::size_t pixels = g.out_h * g.out_w;
  const long pad = static_cast<long>(g.padding);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < static_cast<long>(g.in_channels); ++c) {
    const Real* plane = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        Real* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * pixels;
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const long iy = static_cast<long>(i * g.stride + ky) - pad;
          Real* dst = row + i * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, Real(0));
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const long ix = static_cast<long>(j * g.stride + kx) - pad;
            dst[j] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? Real(0) : src[ix];
          }
        }
      }
  }
}

// Transposed packing: colT[i * out_w + j][(c * k + ky) * k + kx].
void im2col_transposed(const ConvGeometry& g, const Real* x, Real* colT) {
  const std::size_t k = g.kernel;
  const std::size_t depth = g.in_channels * k * k;
  const long pad = static_cast<long>(g.padding);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(g.out_h); ++i)
    for (std::size_t j = 0; j < g.out_w; ++j) {
      Real* dst = colT + (static_cast<std::size_t>(i) * g.out_w + j) * depth;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const Real* plane = x + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(static_cast<std::size_t>(i) * g.stride + ky) - pad;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(j * g.stride + kx) - pad;
            const bool inside = iy >= 0 && iy < static_cast<long>(g.in_h) && ix >= 0 && ix < static_cast<long>(g.in_w);
            *dst++ = inside ? plane[static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)] : Real(0);
          }
        }
      }
    }
}

inline bool pair_less(Real va, std::size_t ia, Real vb, std::size_t ib) {
  return va < vb || (va == vb && ia < ib);
}
}  // namespace

void set_backend(Backend backend) { g_backend.store(backend); }
Backend backend() { return g_backend.load(); }

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y) {
  const std::size_t depth = g.in_channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_h * g.out_w;
  std::vector<Real> col(depth * pixels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * g.in_channels * g.in_h * g.in_w, col.data());
    Real* yn = y.data() + n * g.out_channels * pixels;
    std::fill(yn, yn + g.out_channels * pixels, Real(0));
    const long blocks = static_cast<long>((g.out_channels + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
    for (long b = 0; b < blocks; ++b) {
      const std::size_t o0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, g.out_channels - o0);
      for (std::size_t p0 = 0; p0 < pixels; p0 += kColBlock) {
        const std::size_t p1 = std::min(pixels, p0 + kColBlock);
        if (rows == kRowBlock) {
          Real* y0 = yn + o0 * pixels;
          Real* y1 = y0 + pixels;
          Real* y2 = y1 + pixels;
          Real* y3 = y2 + pixels;
          const Real* w0 = w.data() + o0 * depth;
          const Real* w1 = w0 + depth;
          const Real* w2 = w1 + depth;
          const Real* w3 = w2 + depth;
          for (std::size_t kk = 0; kk < depth; ++kk) {
            const Real a0 = w0[kk], a1 = w1[kk], a2 = w2[kk], a3 = w3[kk];
            const Real* c = col.data() + kk * pixels;
#pragma omp simd
            for (std::size_t p = p0; p < p1; ++p) {
              const Real v = c[p];
              y0[p] += a0 * v;
              y1[p] += a1 * v;
              y2[p] += a2 * v;
              y3[p] += a3 * v;
            }
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            Real* yr = yn + (o0 + r) * pixels;
            const Real* wr = w.data() + (o0 + r) * depth;
            for (std::size_t kk = 0; kk < depth; ++kk) {
              const Real a = wr[kk];
              const Real* c = col.data() + kk * pixels;
#pragma omp simd
              for (std::size_t p = p0; p < p1; ++p) yr[p] += a * c[p];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx) {
  const std::size_t k = g.kernel;
  const std::size_t depth = g.in_channels * k * k;
  const std::size_t pixels = g.out_h * g.out_w;
  const long pad = static_cast<long>(g.padding);
  // Pixel-major column gradient: dcolT[p][kk] = sum_o dy[o][p] * w[o][kk].
  std::vector<Real> dcolT(pixels * depth);
  const long pixel_blocks = static_cast<long>((pixels + kRowBlock - 1) / kRowBlock);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const Real* dyn = dy.data() + n * g.out_channels * pixels;
    Real* dxn = dx.data() + n * g.in_channels * g.in_h * g.in_w;
    std::fill(dcolT.begin(), dcolT.end(), Real(0));
#pragma omp parallel for schedule(static)
    for (long b = 0; b < pixel_blocks; ++b) {
      const std::size_t p0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, pixels - p0);
      for (std::size_t k0 = 0; k0 < depth; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(depth, k0 + kDepthBlock);
        if (rows == kRowBlock) {
          Real* d0 = dcolT.data() + p0 * depth;
          Real* d1 = d0 + depth;
          Real* d2 = d1 + depth;
          Real* d3 = d2 + depth;
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            const Real* src = dyn + o * pixels + p0;
            const Real a0 = src[0], a1 = src[1], a2 = src[2], a3 = src[3];
            const Real* wr = w.data() + o * depth;
#pragma omp simd
            for (std::size_t kk = k0; kk < k1; ++kk) {
              const Real v = wr[kk];
              d0[kk] += a0 * v;
              d1[kk] += a1 * v;
              d2[kk] += a2 * v;
              d3[kk] += a3 * v;
            }
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            Real* d = dcolT.data() + (p0 + r) * depth;
            for (std::size_t o = 0; o < g.out_channels; ++o) {
              const Real a = dyn[o * pixels + p0 + r];
              const Real* wr = w.data() + o * depth;
#pragma omp simd
              for (std::size_t kk = k0; kk < k1; ++kk) d[kk] += a * wr[kk];
            }
          }
        }
      }
    }
    // col2im: each input channel owns its dx plane.
#pragma omp parallel for schedule(static)
    for (long cl = 0; cl < static_cast<long>(g.in_channels); ++cl) {
      const std::size_t c = static_cast<std::size_t>(cl);
      Real* plane = dxn + c * g.in_h * g.in_w;
      std::fill(plane, plane + g.in_h * g.in_w, Real(0));
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          const Real* d = dcolT.data() + (i * g.out_w + j) * depth + c * k * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(i * g.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
            Real* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = static_cast<long>(j * g.stride + kx) - pad;
              if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += d[ky * k + kx];
            }
          }
        }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw) {
  const std::size_t depth = g.in_channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_h * g.out_w;
  std::vector<Real> colT(pixels * depth);
  std::fill(dw.begin(), dw.end(), Real(0));
  const long blocks = static_cast<long>((g.out_channels + kRowBlock - 1) / kRowBlock);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col_transposed(g, x.data() + n * g.in_channels * g.in_h * g.in_w, colT.data());
    const Real* dyn = dy.data() + n * g.out_channels * pixels;
#pragma omp parallel for schedule(static)
    for (long b = 0; b < blocks; ++b) {
      const std::size_t o0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, g.out_channels - o0);
      for (std::size_t k0 = 0; k0 < depth; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(depth, k0 + kDepthBlock);
        if (rows == kRowBlock) {
          Real* d0 = dw.data() + o0 * depth;
          Real* d1 = d0 + depth;
          Real* d2 = d1 + depth;
          Real* d3 = d2 + depth;
          const Real* g0 = dyn + o0 * pixels;
          const Real* g1 = g0 + pixels;
          const Real* g2 = g1 + pixels;
          const Real* g3 = g2 + pixels;
          for (std::size_t p = 0; p < pixels; ++p) {
            const Real a0 = g0[p], a1 = g1[p], a2 = g2[p], a3 = g3[p];
            const Real* c = colT.data() + p * depth;
#pragma omp simd
            for (std::size_t kk = k0; kk < k1; ++kk) {
              const Real v = c[kk];
              d0[kk] += a0 * v;
              d1[kk] += a1 * v;
              d2[kk] += a2 * v;
              d3[kk] += a3 * v;
            }
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            Real* d = dw.data() + (o0 + r) * depth;
            const Real* gr = dyn + (o0 + r) * pixels;
            for (std::size_t p = 0; p < pixels; ++p) {
              const Real a = gr[p];
              const Real* c = colT.data() + p * depth;
#pragma omp simd
              for (std::size_t kk = k0; kk < k1; ++kk) d[kk] += a * c[kk];
            }
          }
        }
      }
    }
  }
}

void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin) {
  // (value, flat index) under lexicographic order is a total order, so the
  // window minimum separates into a row pass and a column pass.
  const std::size_t h = g.height, w = g.width, plane = h * w;
  const long r = static_cast<long>(g.window / 2);
  std::vector<Real> cv(plane), rv(plane);
  std::vector<std::size_t> ci(plane), ri(plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const std::size_t base = n * g.channels * plane;
#pragma omp parallel for schedule(static)
    for (long pl = 0; pl < static_cast<long>(plane); ++pl) {
      const std::size_t p = static_cast<std::size_t>(pl);
      Real best = x[base + p];
      std::size_t idx = base + p;
      for (std::size_t c = 1; c < g.channels; ++c) {
        const std::size_t j = base + c * plane + p;
        if (x[j] < best) {  // later channels have larger indices
          best = x[j];
          idx = j;
        }
      }
      cv[p] = best;
      ci[p] = idx;
    }
#pragma omp parallel for schedule(static)
    for (long yl = 0; yl < static_cast<long>(h); ++yl) {
      const std::size_t row = static_cast<std::size_t>(yl) * w;
      for (long xx = 0; xx < static_cast<long>(w); ++xx) {
        Real best = std::numeric_limits<Real>::infinity();
        std::size_t idx = std::numeric_limits<std::size_t>::max();
        for (long d = -r; d <= r; ++d) {
          const std::size_t s = row + static_cast<std::size_t>(std::clamp(xx + d, 0L, static_cast<long>(w) - 1));
          if (pair_less(cv[s], ci[s], best, idx)) {
            best = cv[s];
            idx = ci[s];
          }
        }
        rv[row + static_cast<std::size_t>(xx)] = best;
        ri[row + static_cast<std::size_t>(xx)] = idx;
      }
    }
#pragma omp parallel for schedule(static)
    for (long yl = 0; yl < static_cast<long>(h); ++yl) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        Real best = std::numeric_limits<Real>::infinity();
        std::size_t idx = std::numeric_limits<std::size_t>::max();
        for (long d = -r; d <= r; ++d) {
          const std::size_t s =
              static_cast<std::size_t>(std::clamp(yl + d, 0L, static_cast<long>(h) - 1)) * w + xx;
          if (pair_less(rv[s], ri[s], best, idx)) {
            best = rv[s];
            idx = ri[s];
          }
        }
        const std::size_t o = n * plane + static_cast<std::size_t>(yl) * w + xx;
        out[o] = best;
        argmin[o] = static_cast<ArgminIndex>(idx);
      }
    }
  }
}

}  // namespace parallel

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y) {
  if (backend() == Backend::Reference) return reference::conv2d_forward(g, x, w, y);
  parallel::conv2d_forward(g, x, w, y);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx) {
  if (backend() == Backend::Reference) return reference::conv2d_backward_input(g, dy, w, dx);
  parallel::conv2d_backward_input(g, dy, w, dx);
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw) {
  if (backend() == Backend::Reference) return reference::conv2d_backward_weight(g, x, dy, dw);
  parallel::conv2d_backward_weight(g, x, dy, dw);
}

void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin) {
  if (backend() == Backend::Reference) return reference::min_pool_channels_window(g, x, out, argmin);
  parallel::min_pool_channels_window(g, x, out, argmin);
}

}  // namespace deblur::kernels
