#pragma once

#include <cstddef>
#include <vector>

#include "deblur/kernels.hpp"
#include "deblur/rng.hpp"
#include "deblur/tape.hpp"
#include "deblur/tensor.hpp"

namespace deblur {

enum class Mode { Train, Infer };

// Every op records a node on `tape` when any input requires a gradient and
// returns a fresh tensor. Image tensors are NCHW.

/// Strided 2-D convolution. weight is (out_ch, in_ch, k, k), bias is (out_ch).
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Adjoint of conv2d for spatial upsampling. weight is (in_ch, out_ch, k, k),
/// matching the conv2d it transposes. Output size is
/// (H - 1) * stride - 2 * padding + k + output_padding.
Tensor transposed_conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                         int padding, int output_padding = 0);

/// Exponential running statistics for batch normalization. Empty until the
/// first training-mode pass or explicit initialization.
struct RunningStats {
  std::vector<Real> mean;
  std::vector<Real> var;

  bool populated() const { return !mean.empty(); }
  static RunningStats identity(std::size_t channels) {
    return {std::vector<Real>(channels, Real(0)), std::vector<Real>(channels, Real(1))};
  }
};

struct BatchNormOptions {
  Real eps = Real(1e-5);
  /// Weight of the previous running value: running = momentum * running + (1 - momentum) * batch.
  Real momentum = Real(0.9);
};

/// Per-channel normalization over (batch, H, W). Train mode uses biased batch
/// statistics and updates `stats`; infer mode reads `stats`.
Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, Mode mode,
                  RunningStats& stats, BatchNormOptions options = {});

/// x if x > 0 else alpha * x; the slope at exactly 0 is alpha.
Tensor leaky_relu(Tape& tape, const Tensor& input, Real alpha);
Tensor sigmoid(Tape& tape, const Tensor& input);
Tensor tanh(Tape& tape, const Tensor& input);

/// Inverted dropout: survivors scaled by 1 / (1 - rate). Identity in infer mode.
Tensor dropout(Tape& tape, const Tensor& input, Real rate, Mode mode, Rng& rng);

struct MinPoolResult {
  Tensor values;                            // (N, 1, H, W)
  std::vector<kernels::ArgminIndex> argmin; // flat source index per output pixel
};

/// Source coordinates of an argmin entry.
struct ArgminSource {
  std::size_t batch;
  std::size_t channel;
  std::size_t row;
  std::size_t col;
};
ArgminSource decode_argmin(const Shape& source_shape, kernels::ArgminIndex index);

/// Minimum over channels then over an odd window x window neighborhood with
/// edge-replicated borders. The gradient of each output flows entirely to its
/// argmin source element.
MinPoolResult min_pool_channels_window(Tape& tape, const Tensor& input, int window);

/// Channel-wise concatenation; batch and spatial extents must agree.
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);

/// mean |a - b| over all elements; subgradient 0 where a == b.
Tensor reduce_l1(Tape& tape, const Tensor& a, const Tensor& b);
/// mean (a - b)^2 over all elements.
Tensor reduce_l2sq(Tape& tape, const Tensor& a, const Tensor& b);

/// scale * x + shift, elementwise.
Tensor affine(Tape& tape, const Tensor& input, Real scale, Real shift);
/// Elementwise sum of equal-shape tensors.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// Mean of all elements as a one-element tensor.
Tensor mean(Tape& tape, const Tensor& input);
/// Natural log; inputs must be positive.
Tensor log(Tape& tape, const Tensor& input);
/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
Tensor clamp(Tape& tape, const Tensor& input, Real lo, Real hi);

}  // namespace deblur
