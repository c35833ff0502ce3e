#pragma once

#include <cstddef>
#include <vector>

#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

namespace deblur {

/// Nonnegative taps summing to 1, odd extent, anchored at the center tap.
struct BlurKernel {
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<double> taps{1.0};  // row-major

  std::size_t anchor_row() const { return height / 2; }
  std::size_t anchor_col() const { return width / 2; }
  double at(std::size_t r, std::size_t c) const { return taps[r * width + c]; }
};

BlurKernel identity_kernel();
/// size x size uniform kernel (size odd).
BlurKernel box_kernel(std::size_t size);

/// Camera-shake kernel: a random walk of arc length `length - 1` px with a
/// slowly drifting heading, rasterized with bilinear splatting and
/// normalized. length 1 gives the identity. Throws ConfigError for length < 1.
BlurKernel random_motion_kernel(double length, Rng& rng);

/// Per-channel 2-D convolution with edge-replicated borders.
/// Throws DimensionError if the kernel is larger than the image.
Tensor apply_blur(const Tensor& sharp, const BlurKernel& kernel);

/// Adds i.i.d. N(0, variance) and clamps to [0, 1]. Throws ConfigError for
/// negative variance.
Tensor add_gaussian_noise(const Tensor& image, double variance, Rng& rng);

/// 2x2 box average; an odd trailing row or column is dropped.
Tensor downsample2(const Tensor& image);

}  // namespace deblur
