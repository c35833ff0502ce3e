#pragma once

// Compute kernels behind the differentiable ops.
//
// Two implementations of every kernel:
//   reference::  direct loops written straight from the definitions; kept as
//                the oracle for tests and the baseline for bench_kernels.
//   parallel::   im2col + register-blocked products with OpenMP over output
//                ownership (output channel / plane / row). Every output element
//                is reduced by one thread in a fixed order, so results do not
//                depend on the thread count.
//
// The free functions at namespace scope dispatch on the active backend.

#include <cstddef>
#include <cstdint>
#include <span>

#include "deblur/tensor.hpp"

namespace deblur::kernels {

/// Geometry of a strided 2-D convolution mapping an input volume
/// (batch, in_channels, in_h, in_w) to (batch, out_channels, out_h, out_w)
/// with a square kernel. Transposed convolution reuses the geometry of the
/// convolution it is the adjoint of.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t out_h = 1;
  std::size_t out_w = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h * out_w; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

/// Per-output-pixel winner of a channel + window minimum: flat index into the
/// source tensor.
using ArgminIndex = std::uint32_t;

/// Geometry of the channel-then-window minimum (edge-replicated borders).
struct MinPoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t window = 1;  // odd
};

enum class Backend { Reference, Parallel };

void set_backend(Backend backend);
Backend backend();

/// Restores the previous backend on scope exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

namespace reference {
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw);
void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin);
}  // namespace reference

namespace parallel {
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw);
void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin);
}  // namespace parallel

/// y = W * x without bias. Overwrites y.
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w, std::span<Real> y);
/// dx = W^T * dy; also the forward pass of transposed convolution. Overwrites dx.
void conv2d_backward_input(const ConvGeometry& g, std::span<const Real> dy, std::span<const Real> w,
                           std::span<Real> dx);
/// dw = sum over batch of dy * x^T. Overwrites dw.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> dy,
                            std::span<Real> dw);
/// out(n, p) = min over the window around p of the per-pixel channel minimum.
/// Ties go to the lowest flat source index, i.e. lowest (channel, row, col).
void min_pool_channels_window(const MinPoolGeometry& g, std::span<const Real> x, std::span<Real> out,
                              std::span<ArgminIndex> argmin);

}  // namespace deblur::kernels
