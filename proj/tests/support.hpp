#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

namespace testing {

using deblur::Real;
using deblur::Rng;
using deblur::Shape;
using deblur::Tensor;

inline Tensor uniform(Shape shape, Rng& rng, double lo = -1, double hi = 1, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(deblur::shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(u(rng));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Direct-summation convolution (cross-correlation) with zero padding.
inline Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const long n = static_cast<long>(x.dim(0)), c = static_cast<long>(x.dim(1));
  const long h = static_cast<long>(x.dim(2)), wd = static_cast<long>(x.dim(3));
  const long o = static_cast<long>(w.dim(0)), k = static_cast<long>(w.dim(2));
  const long oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y(Shape{x.dim(0), w.dim(0), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  auto out = y.mutable_data();
  for (long in = 0; in < n; ++in)
    for (long oc = 0; oc < o; ++oc)
      for (long r = 0; r < oh; ++r)
        for (long q = 0; q < ow; ++q) {
          double acc = b.defined() ? static_cast<double>(b[static_cast<std::size_t>(oc)]) : 0.0;
          for (long ic = 0; ic < c; ++ic)
            for (long u = 0; u < k; ++u)
              for (long v = 0; v < k; ++v) {
                const long yy = r * stride - pad + u, xx = q * stride - pad + v;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += static_cast<double>(x[static_cast<std::size_t>(((in * c + ic) * h + yy) * wd + xx)]) *
                       static_cast<double>(w[static_cast<std::size_t>(((oc * c + ic) * k + u) * k + v)]);
              }
          out[static_cast<std::size_t>(((in * o + oc) * oh + r) * ow + q)] = static_cast<Real>(acc);
        }
  return y;
}

// Exhaustive dark channel: min over channels and an edge-replicated window.
inline Tensor dark_channel_oracle(const Tensor& img, int window) {
  const long n = static_cast<long>(img.dim(0)), c = static_cast<long>(img.dim(1));
  const long h = static_cast<long>(img.dim(2)), w = static_cast<long>(img.dim(3));
  const long r = window / 2;
  Tensor out(Shape{img.dim(0), 1, img.dim(2), img.dim(3)});
  auto o = out.mutable_data();
  for (long in = 0; in < n; ++in)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        Real m = std::numeric_limits<Real>::infinity();
        for (long ch = 0; ch < c; ++ch)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              const long yy = std::clamp(y + dy, 0L, h - 1), xx = std::clamp(x + dx, 0L, w - 1);
              m = std::min(m, img[static_cast<std::size_t>(((in * c + ch) * h + yy) * w + xx)]);
            }
        o[static_cast<std::size_t>((in * h + y) * w + x)] = m;
      }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("deblur_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string fixture(const std::string& name) { return std::string(DEBLUR_TEST_DATA) + "/" + name; }

}  // namespace testing
