#include <algorithm>
#include <limits>

#include "deblur/kernels.hpp"

namespace deblur::kernels::reference {

namespace {
// Input coordinate hit by output position `o` and kernel tap `t`; negative or
// >= extent means the tap lands in the zero padding.
inline long source_coord(std::size_t o, std::size_t t, const ConvGeometry& g) {
  return static_cast<long>(o * g.stride + t) - static_cast<long>(g.padding);
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          Real acc = 0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = source_coord(i, ky, g);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = source_coord(j, kx, g);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                acc += w[((o * g.in_channels + c) * k + ky) * k + kx] *
                       x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
            }
          y[((n * g.out_channels + o) * g.out_h + i) * g.out_w + j] = acc;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx) {
  const std::size_t k = g.kernel;
  std::fill(dx.begin(), dx.end(), Real(0));
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          const Real grad = dy[((n * g.out_channels + o) * g.out_h + i) * g.out_w + j];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = source_coord(i, ky, g);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = source_coord(j, kx, g);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                dx[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    grad * w[((o * g.in_channels + c) * k + ky) * k + kx];
              }
            }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw) {
  const std::size_t k = g.kernel;
  std::fill(dw.begin(), dw.end(), Real(0));
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          const Real grad = dy[((n * g.out_channels + o) * g.out_h + i) * g.out_w + j];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = source_coord(i, ky, g);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = source_coord(j, kx, g);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                dw[((o * g.in_channels + c) * k + ky) * k + kx] +=
                    grad * x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
            }
        }
}

void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin) {
  const long r = static_cast<long>(g.window / 2);
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        Real best = std::numeric_limits<Real>::infinity();
        std::size_t best_idx = std::numeric_limits<std::size_t>::max();
        for (std::size_t c = 0; c < g.channels; ++c)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              const long sy = std::clamp(y + dy, 0L, h - 1);
              const long sx = std::clamp(xx + dx, 0L, w - 1);
              const std::size_t idx = ((n * g.channels + c) * g.height + sy) * g.width + sx;
              const Real v = x[idx];
              if (v < best || (v == best && idx < best_idx)) {
                best = v;
                best_idx = idx;
              }
            }
        const std::size_t o = (n * g.height + y) * g.width + xx;
        out[o] = best;
        argmin[o] = static_cast<ArgminIndex>(best_idx);
      }
}

}  // namespace deblur::kernels::reference
