#include "deblur/blur.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "deblur/error.hpp"

namespace deblur {

namespace {

constexpr double kSubstep = 0.25;        // px between splatted trajectory samples
constexpr double kHeadingDrift = 0.6;    // rad per sqrt(px)
constexpr double kHeadingInertia = 0.7;  // fraction of the previous turn rate kept per substep

struct Point {
  double x;
  double y;
};

}  // namespace

BlurKernel identity_kernel() { return BlurKernel{}; }

BlurKernel box_kernel(std::size_t size) {
  if (size == 0 || size % 2 == 0) throw ConfigError("box kernel size must be odd, got " + std::to_string(size));
  const double v = 1.0 / static_cast<double>(size * size);
  return BlurKernel{size, size, std::vector<double>(size * size, v)};
}

BlurKernel random_motion_kernel(double length, Rng& rng) {
  if (!(length >= 1)) throw ConfigError("motion kernel length must be >= 1");
  std::uniform_real_distribution<double> uniform(0.0, 2 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double arc = length - 1;
  const auto steps = static_cast<std::size_t>(std::ceil(arc / kSubstep));
  const double ds = steps ? arc / static_cast<double>(steps) : 0.0;
  std::vector<Point> path{{0.0, 0.0}};
  double heading = uniform(rng);
  double turn = 0;
  for (std::size_t i = 0; i < steps; ++i) {
    turn = kHeadingInertia * turn + kHeadingDrift * std::sqrt(ds) * normal(rng);
    heading += turn;
    const Point& p = path.back();
    path.push_back({p.x + ds * std::cos(heading), p.y + ds * std::sin(heading)});
  }

  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  for (const Point& p : path) {
    min_x = std::min(min_x, std::floor(p.x));
    min_y = std::min(min_y, std::floor(p.y));
    max_x = std::max(max_x, std::ceil(p.x));
    max_y = std::max(max_y, std::ceil(p.y));
  }
  std::size_t w = static_cast<std::size_t>(max_x - min_x) + 1;
  std::size_t h = static_cast<std::size_t>(max_y - min_y) + 1;
  std::vector<double> grid(w * h, 0.0);
  for (const Point& p : path) {
    const double fx = p.x - min_x, fy = p.y - min_y;
    const auto x0 = static_cast<std::size_t>(std::floor(fx));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
    grid[y0 * w + x0] += (1 - ax) * (1 - ay);
    if (ax > 0) grid[y0 * w + x0 + 1] += ax * (1 - ay);
    if (ay > 0) grid[(y0 + 1) * w + x0] += (1 - ax) * ay;
    if (ax > 0 && ay > 0) grid[(y0 + 1) * w + x0 + 1] += ax * ay;
  }

  // Trim empty border rows/columns, then pad to odd extents so the center is a tap.
  std::size_t top = h, bottom = 0, left = w, right = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (grid[y * w + x] > 0) {
        top = std::min(top, y);
        bottom = std::max(bottom, y);
        left = std::min(left, x);
        right = std::max(right, x);
      }
  const std::size_t kh = (bottom - top + 1) | 1;
  const std::size_t kw = (right - left + 1) | 1;
  BlurKernel k{kh, kw, std::vector<double>(kh * kw, 0.0)};
  for (std::size_t y = top; y <= bottom; ++y)
    for (std::size_t x = left; x <= right; ++x) k.taps[(y - top) * kw + (x - left)] = grid[y * w + x];
  const double total = std::accumulate(k.taps.begin(), k.taps.end(), 0.0);
  for (double& t : k.taps) t /= total;
  return k;
}

Tensor apply_blur(const Tensor& sharp, const BlurKernel& kernel) {
  if (sharp.rank() != 4) throw DimensionError("apply_blur: expected an NCHW image");
  const auto& s = sharp.shape();
  const std::size_t h = s[2], w = s[3];
  if (kernel.height > h || kernel.width > w)
    throw DimensionError("apply_blur: kernel " + std::to_string(kernel.height) + "x" + std::to_string(kernel.width) +
                         " larger than image " + std::to_string(h) + "x" + std::to_string(w));
  const long ar = static_cast<long>(kernel.anchor_row()), ac = static_cast<long>(kernel.anchor_col());
  auto src = sharp.data();
  std::vector<Real> out(sharp.numel());
  for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
    const Real* in = src.data() + plane * h * w;
    Real* dst = out.data() + plane * h * w;
    for (long y = 0; y < static_cast<long>(h); ++y)
      for (long x = 0; x < static_cast<long>(w); ++x) {
        double acc = 0;
        for (std::size_t i = 0; i < kernel.height; ++i) {
          const long sy = std::clamp(y - (static_cast<long>(i) - ar), 0L, static_cast<long>(h) - 1);
          for (std::size_t j = 0; j < kernel.width; ++j) {
            const long sx = std::clamp(x - (static_cast<long>(j) - ac), 0L, static_cast<long>(w) - 1);
            acc += kernel.at(i, j) * static_cast<double>(in[sy * static_cast<long>(w) + sx]);
          }
        }
        dst[y * static_cast<long>(w) + x] = static_cast<Real>(acc);
      }
  }
  return Tensor(s, std::move(out));
}

Tensor add_gaussian_noise(const Tensor& image, double variance, Rng& rng) {
  if (!(variance >= 0)) throw ConfigError("noise variance must be >= 0");
  std::vector<Real> out(image.data().begin(), image.data().end());
  if (variance > 0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (Real& v : out) v = std::clamp(static_cast<Real>(v + noise(rng)), Real(0), Real(1));
  }
  return Tensor(image.shape(), std::move(out));
}

Tensor downsample2(const Tensor& image) {
  if (image.rank() != 4) throw DimensionError("downsample2: expected an NCHW image");
  const auto& s = image.shape();
  if (s[2] < 2 || s[3] < 2) throw DimensionError("downsample2: image " + shape_to_string(s) + " too small");
  const std::size_t h = s[2] / 2, w = s[3] / 2;
  auto src = image.data();
  std::vector<Real> out(s[0] * s[1] * h * w);
  std::size_t o = 0;
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const Real sum = src[nchw_index(s, n, c, 2 * y, 2 * x)] + src[nchw_index(s, n, c, 2 * y, 2 * x + 1)] +
                           src[nchw_index(s, n, c, 2 * y + 1, 2 * x)] + src[nchw_index(s, n, c, 2 * y + 1, 2 * x + 1)];
          out[o++] = sum / 4;
        }
  return Tensor({s[0], s[1], h, w}, std::move(out));
}

}  // namespace deblur
