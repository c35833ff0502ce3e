#pragma once

#include <vector>

#include "deblur/ops.hpp"

namespace deblur {

/// Default |N(p)| extent, following the dehazing convention.
inline constexpr int kDefaultDarkChannelWindow = 15;
/// One 8-bit quantization level.
inline constexpr double kDefaultSparsityThreshold = 1.0 / 255.0;

/// Per-pixel minimum over color channels and a window x window neighborhood.
struct DarkChannelMap {
  Tensor values;  // (N, 1, H, W)
  int window = 1;
  std::vector<kernels::ArgminIndex> argmin;  // flat index into the source image
};

/// Dark channel of an image in [0, 1] (any channel count; 1 channel makes the
/// channel minimum the identity). Differentiable through `tape`.
DarkChannelMap dark_channel_map(Tape& tape, const Tensor& image, int window);

/// Mean squared difference between the dark channels of `restored` and
/// `sharp_gt`, both in network range [-1, 1]; each is remapped to [0, 1]
/// before the map. Gradients flow to `restored` only.
Tensor dark_channel_loss(Tape& tape, const Tensor& restored, const Tensor& sharp_gt, int window);

/// Fraction of dark-channel pixels strictly above `threshold`: a thresholded
/// L0 count, reported as a diagnostic and not used in training.
double dark_channel_sparsity(const Tensor& image, int window, double threshold = kDefaultSparsityThreshold);

}  // namespace deblur
