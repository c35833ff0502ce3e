#include "deblur/dark_channel.hpp"

#include <string>

#include "deblur/error.hpp"

namespace deblur {

DarkChannelMap dark_channel_map(Tape& tape, const Tensor& image, int window) {
  if (window < 1 || window % 2 == 0)
    throw ConfigError("dark channel window must be a positive odd integer, got " + std::to_string(window));
  MinPoolResult pooled = min_pool_channels_window(tape, image, window);
  return DarkChannelMap{std::move(pooled.values), window, std::move(pooled.argmin)};
}

Tensor dark_channel_loss(Tape& tape, const Tensor& restored, const Tensor& sharp_gt, int window) {
  if (restored.shape() != sharp_gt.shape())
    throw DimensionError("dark_channel_loss: shape mismatch " + shape_to_string(restored.shape()) + " vs " +
                         shape_to_string(sharp_gt.shape()));
  const Tensor target = dark_channel_map(tape, affine(tape, sharp_gt.detach(), Real(0.5), Real(0.5)), window).values;
  const Tensor produced = dark_channel_map(tape, affine(tape, restored, Real(0.5), Real(0.5)), window).values;
  return reduce_l2sq(tape, produced, target);
}

double dark_channel_sparsity(const Tensor& image, int window, double threshold) {
  if (threshold < 0) throw ConfigError("dark_channel_sparsity: threshold must be >= 0");
  Tape scratch;
  const DarkChannelMap map = dark_channel_map(scratch, image.detach(), window);
  std::size_t above = 0;
  for (Real v : map.values.data())
    if (static_cast<double>(v) > threshold) ++above;
  return static_cast<double>(above) / static_cast<double>(map.values.numel());
}

}  // namespace deblur
