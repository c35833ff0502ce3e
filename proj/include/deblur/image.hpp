#pragma once

#include <cstddef>
#include <span>

#include "deblur/tensor.hpp"

namespace deblur {

// Non-differentiable NCHW helpers shared by the data pipeline and inference.

/// Window [top, top + height) x [left, left + width) of every channel.
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

/// Mirror-pads the bottom and right edges (edge pixel not repeated).
Tensor reflect_pad(const Tensor& image, std::size_t bottom, std::size_t right);

/// Concatenates equal-shape tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

/// Batch item `n` as a batch of one.
Tensor batch_item(const Tensor& batch, std::size_t n);

/// [0, 1] -> [-1, 1] and back (the inverse clamps to [0, 1]).
Tensor to_network_range(const Tensor& image01);
Tensor from_network_range(const Tensor& image);

}  // namespace deblur
