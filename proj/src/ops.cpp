#include "deblur/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "deblur/error.hpp"

namespace deblur {

namespace {

// Handles share storage, so a copy writes through to the caller's gradient.
void accumulate(Tensor t, std::span<const Real> g) {
  if (!t.requires_grad()) return;
  auto dst = t.grad_mut();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (!t.defined() || t.rank() != 4)
    throw DimensionError(std::string(op) + ": " + what + " must be NCHW, got " +
                         (t.defined() ? shape_to_string(t.shape()) : std::string("undefined")));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

Tensor make_output(Shape shape, std::vector<Real> data, bool needs_grad) {
  return Tensor(std::move(shape), std::move(data), needs_grad);
}

void check_weight(const Tensor& weight, const Tensor& bias, std::size_t bias_len, const char* op) {
  require_rank4(weight, op, "weight");
  if (weight.dim(2) != weight.dim(3))
    throw DimensionError(std::string(op) + ": kernel must be square, got " + shape_to_string(weight.shape()));
  if (bias.defined() && bias.numel() != bias_len)
    throw DimensionError(std::string(op) + ": bias has " + std::to_string(bias.numel()) + " elements, expected " +
                         std::to_string(bias_len));
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank4(input, "conv2d", "input");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0, got " + std::to_string(padding));
  check_weight(weight, bias, weight.defined() ? weight.dim(0) : 0, "conv2d");
  if (weight.dim(1) != input.dim(1))
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = static_cast<std::size_t>(stride);
  g.padding = static_cast<std::size_t>(padding);
  if (g.in_h + 2 * g.padding < g.kernel || g.in_w + 2 * g.padding < g.kernel)
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) + " larger than padded input " +
                         shape_to_string(input.shape()));
  g.out_h = (g.in_h + 2 * g.padding - g.kernel) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.padding - g.kernel) / g.stride + 1;

  std::vector<Real> y(g.output_size());
  kernels::conv2d_forward(g, input.data(), weight.data(), y);
  if (bias.defined()) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const Real b = bias[o];
        Real* row = y.data() + (n * g.out_channels + o) * plane;
        for (std::size_t p = 0; p < plane; ++p) row[p] += b;
      }
  }
  const bool needs = Tape::needs_grad({&input, &weight, &bias});
  Tensor out = make_output({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Conv2d, {input, weight, bias}, out, [g, input, weight, bias, out]() mutable {
      auto dy = out.grad();
      if (input.requires_grad()) {
        std::vector<Real> dx(g.input_size());
        kernels::conv2d_backward_input(g, dy, weight.data(), dx);
        accumulate(input, dx);
      }
      if (weight.requires_grad()) {
        std::vector<Real> dw(g.weight_size());
        kernels::conv2d_backward_weight(g, input.data(), dy, dw);
        accumulate(weight, dw);
      }
      if (bias.defined() && bias.requires_grad()) {
        std::vector<Real> db(g.out_channels, Real(0));
        const std::size_t plane = g.out_h * g.out_w;
        for (std::size_t n = 0; n < g.batch; ++n)
          for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t p = 0; p < plane; ++p) db[o] += dy[(n * g.out_channels + o) * plane + p];
        accumulate(bias, db);
      }
    });
  }
  return out;
}

Tensor transposed_conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                         int padding, int output_padding) {
  require_rank4(input, "transposed_conv2d", "input");
  if (stride < 1) throw ConfigError("transposed_conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("transposed_conv2d: padding must be >= 0, got " + std::to_string(padding));
  if (output_padding < 0 || output_padding >= stride)
    throw ConfigError("transposed_conv2d: output_padding must be in [0, stride), got " +
                      std::to_string(output_padding));
  check_weight(weight, bias, weight.defined() ? weight.dim(1) : 0, "transposed_conv2d");
  if (weight.dim(0) != input.dim(1))
    throw DimensionError("transposed_conv2d: input has " + std::to_string(input.dim(1)) +
                         " channels, weight expects " + std::to_string(weight.dim(0)));
  // Geometry of the forward convolution this op is the adjoint of.
  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.out_channels = input.dim(1);
  g.out_h = input.dim(2);
  g.out_w = input.dim(3);
  g.in_channels = weight.dim(1);
  g.kernel = weight.dim(2);
  g.stride = static_cast<std::size_t>(stride);
  g.padding = static_cast<std::size_t>(padding);
  const long full_h = static_cast<long>((g.out_h - 1) * g.stride + g.kernel + output_padding);
  const long full_w = static_cast<long>((g.out_w - 1) * g.stride + g.kernel + output_padding);
  if (full_h <= 2L * padding || full_w <= 2L * padding)
    throw DimensionError("transposed_conv2d: padding " + std::to_string(padding) + " leaves an empty output for " +
                         shape_to_string(input.shape()));
  g.in_h = static_cast<std::size_t>(full_h - 2L * padding);
  g.in_w = static_cast<std::size_t>(full_w - 2L * padding);

  std::vector<Real> y(g.input_size());
  kernels::conv2d_backward_input(g, input.data(), weight.data(), y);
  if (bias.defined()) {
    const std::size_t plane = g.in_h * g.in_w;
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const Real b = bias[c];
        Real* row = y.data() + (n * g.in_channels + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) row[p] += b;
      }
  }
  const bool needs = Tape::needs_grad({&input, &weight, &bias});
  Tensor out = make_output({g.batch, g.in_channels, g.in_h, g.in_w}, std::move(y), needs);
  if (needs) {
    tape.record(OpKind::TransposedConv2d, {input, weight, bias}, out, [g, input, weight, bias, out]() mutable {
      auto dy = out.grad();
      if (input.requires_grad()) {
        std::vector<Real> dx(g.output_size());
        kernels::conv2d_forward(g, dy, weight.data(), dx);
        accumulate(input, dx);
      }
      if (weight.requires_grad()) {
        std::vector<Real> dw(g.weight_size());
        kernels::conv2d_backward_weight(g, dy, input.data(), dw);
        accumulate(weight, dw);
      }
      if (bias.defined() && bias.requires_grad()) {
        std::vector<Real> db(g.in_channels, Real(0));
        const std::size_t plane = g.in_h * g.in_w;
        for (std::size_t n = 0; n < g.batch; ++n)
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) db[c] += dy[(n * g.in_channels + c) * plane + p];
        accumulate(bias, db);
      }
    });
  }
  return out;
}

Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, Mode mode,
                  RunningStats& stats, BatchNormOptions options) {
  require_rank4(input, "batch_norm", "input");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels)
    throw DimensionError("batch_norm: gamma/beta must have " + std::to_string(channels) + " elements");
  const std::size_t count = batch * plane;
  auto x = input.data();

  std::vector<Real> mean(channels), inv_std(channels);
  if (mode == Mode::Train) {
    if (!stats.populated()) stats = RunningStats::identity(channels);
    if (stats.mean.size() != channels || stats.var.size() != channels)
      throw StateError("batch_norm: running statistics sized for " + std::to_string(stats.mean.size()) +
                       " channels, input has " + std::to_string(channels));
    for (std::size_t c = 0; c < channels; ++c) {
      Real s = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const Real* row = x.data() + (n * channels + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) s += row[p];
      }
      const Real mu = s / static_cast<Real>(count);
      Real v = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const Real* row = x.data() + (n * channels + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) v += (row[p] - mu) * (row[p] - mu);
      }
      v /= static_cast<Real>(count);
      mean[c] = mu;
      inv_std[c] = Real(1) / std::sqrt(v + options.eps);
      stats.mean[c] = to_storage(options.momentum * stats.mean[c] + (Real(1) - options.momentum) * mu);
      stats.var[c] = to_storage(options.momentum * stats.var[c] + (Real(1) - options.momentum) * v);
    }
  } else {
    if (!stats.populated()) throw StateError("batch_norm: infer mode requires populated running statistics");
    if (stats.mean.size() != channels)
      throw StateError("batch_norm: running statistics sized for " + std::to_string(stats.mean.size()) +
                       " channels, input has " + std::to_string(channels));
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = Real(1) / std::sqrt(stats.var[c] + options.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<Real>>(input.numel());
  std::vector<Real> y(input.numel());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * plane;
      const Real gm = gamma[c], bt = beta[c];
      for (std::size_t p = 0; p < plane; ++p) {
        const Real h = (x[off + p] - mean[c]) * inv_std[c];
        (*xhat)[off + p] = h;
        y[off + p] = gm * h + bt;
      }
    }

  const bool needs = Tape::needs_grad({&input, &gamma, &beta});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::BatchNorm, {input, gamma, beta}, out,
                [=, input = input, gamma = gamma, beta = beta, out = out]() mutable {
                  auto dy = out.grad();
                  std::vector<Real> sum_dy(channels, Real(0)), sum_dy_h(channels, Real(0));
                  for (std::size_t n = 0; n < batch; ++n)
                    for (std::size_t c = 0; c < channels; ++c) {
                      const std::size_t off = (n * channels + c) * plane;
                      for (std::size_t p = 0; p < plane; ++p) {
                        sum_dy[c] += dy[off + p];
                        sum_dy_h[c] += dy[off + p] * (*xhat)[off + p];
                      }
                    }
                  if (input.requires_grad()) {
                    std::vector<Real> dx(input.numel());
                    const Real m = static_cast<Real>(count);
                    for (std::size_t n = 0; n < batch; ++n)
                      for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t off = (n * channels + c) * plane;
                        const Real scale = gamma[c] * inv_std[c];
                        for (std::size_t p = 0; p < plane; ++p) {
                          dx[off + p] = mode == Mode::Train
                                            ? scale / m * (m * dy[off + p] - sum_dy[c] - (*xhat)[off + p] * sum_dy_h[c])
                                            : scale * dy[off + p];
                        }
                      }
                    accumulate(input, dx);
                  }
                  accumulate(gamma, sum_dy_h);
                  accumulate(beta, sum_dy);
                });
  }
  return out;
}

Tensor leaky_relu(Tape& tape, const Tensor& input, Real alpha) {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("leaky_relu: alpha must be in (0, 1)");
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : alpha * x[i];
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::LeakyRelu, {input}, out, [input, out, alpha]() mutable {
      auto dy = out.grad();
      auto x = input.data();
      std::vector<Real> dx(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : alpha * dy[i];
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& input) {
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= 0) {
      y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
    } else {
      const Real e = std::exp(x[i]);
      y[i] = e / (Real(1) + e);
    }
  }
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Sigmoid, {input}, out, [input, out]() mutable {
      auto dy = out.grad();
      auto y = out.data();
      std::vector<Real> dx(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (Real(1) - y[i]);
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor tanh(Tape& tape, const Tensor& input) {
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Tanh, {input}, out, [input, out]() mutable {
      auto dy = out.grad();
      auto y = out.data();
      std::vector<Real> dx(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (Real(1) - y[i] * y[i]);
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& input, Real rate, Mode mode, Rng& rng) {
  if (!(rate >= 0 && rate < 1)) throw ConfigError("dropout: rate must be in [0, 1)");
  if (mode == Mode::Infer || rate == 0) return input;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  auto x = input.data();
  auto mask = std::make_shared<std::vector<Real>>(x.size());
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // 53-bit uniform from the raw engine output keeps masks identical across standard libraries.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    (*mask)[i] = u < rate ? Real(0) : keep_scale;
    y[i] = x[i] * (*mask)[i];
  }
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Dropout, {input}, out, [input, out, mask]() mutable {
      auto dy = out.grad();
      std::vector<Real> dx(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * (*mask)[i];
      accumulate(input, dx);
    });
  }
  return out;
}

ArgminSource decode_argmin(const Shape& s, kernels::ArgminIndex index) {
  std::size_t i = index;
  ArgminSource src{};
  src.col = i % s[3];
  i /= s[3];
  src.row = i % s[2];
  i /= s[2];
  src.channel = i % s[1];
  src.batch = i / s[1];
  return src;
}

MinPoolResult min_pool_channels_window(Tape& tape, const Tensor& input, int window) {
  require_rank4(input, "min_pool_channels_window", "input");
  if (window < 1 || window % 2 == 0)
    throw ConfigError("min_pool_channels_window: window must be a positive odd integer, got " + std::to_string(window));
  if (input.numel() > std::numeric_limits<kernels::ArgminIndex>::max())
    throw DimensionError("min_pool_channels_window: input too large for 32-bit argmin indices");
  kernels::MinPoolGeometry g;
  g.batch = input.dim(0);
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.window = static_cast<std::size_t>(window);
  const std::size_t n_out = g.batch * g.height * g.width;
  std::vector<Real> values(n_out);
  std::vector<kernels::ArgminIndex> argmin(n_out);
  kernels::min_pool_channels_window(g, input.data(), values, argmin);

  const bool needs = Tape::needs_grad({&input});
  MinPoolResult result{make_output({g.batch, 1, g.height, g.width}, std::move(values), needs), argmin};
  if (needs) {
    auto saved = std::make_shared<std::vector<kernels::ArgminIndex>>(std::move(argmin));
    Tensor out = result.values;
    tape.record(OpKind::MinPoolChannelsWindow, {input}, out, [input, out, saved]() mutable {
      auto dy = out.grad();
      std::vector<Real> dx(input.numel(), Real(0));
      for (std::size_t o = 0; o < dy.size(); ++o) dx[(*saved)[o]] += dy[o];
      accumulate(input, dx);
    });
  }
  return result;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels", "first input");
  require_rank4(b, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError("concat_channels: batch/spatial mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  std::vector<Real> y(batch * (ca + cb) * plane);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(ad.data() + n * ca * plane, ca * plane, y.data() + n * (ca + cb) * plane);
    std::copy_n(bd.data() + n * cb * plane, cb * plane, y.data() + (n * (ca + cb) + ca) * plane);
  }
  const bool needs = Tape::needs_grad({&a, &b});
  Tensor out = make_output({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(y), needs);
  if (needs) {
    tape.record(OpKind::ConcatChannels, {a, b}, out, [a, b, out, batch, ca, cb, plane]() mutable {
      auto dy = out.grad();
      std::vector<Real> da(batch * ca * plane), db(batch * cb * plane);
      for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(dy.data() + n * (ca + cb) * plane, ca * plane, da.data() + n * ca * plane);
        std::copy_n(dy.data() + (n * (ca + cb) + ca) * plane, cb * plane, db.data() + n * cb * plane);
      }
      accumulate(a, da);
      accumulate(b, db);
    });
  }
  return out;
}

Tensor reduce_l1(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "reduce_l1");
  auto ad = a.data();
  auto bd = b.data();
  Real s = 0;
  for (std::size_t i = 0; i < ad.size(); ++i) s += std::abs(ad[i] - bd[i]);
  const Real n = static_cast<Real>(ad.size());
  const bool needs = Tape::needs_grad({&a, &b});
  Tensor out = make_output({1}, {s / n}, needs);
  if (needs) {
    tape.record(OpKind::ReduceL1, {a, b}, out, [a, b, out, n]() mutable {
      const Real g = out.grad()[0] / n;
      auto ad = a.data();
      auto bd = b.data();
      std::vector<Real> da(ad.size());
      for (std::size_t i = 0; i < ad.size(); ++i) {
        const Real d = ad[i] - bd[i];
        da[i] = d > 0 ? g : (d < 0 ? -g : Real(0));
      }
      accumulate(a, da);
      if (b.requires_grad()) {
        for (Real& v : da) v = -v;
        accumulate(b, da);
      }
    });
  }
  return out;
}

Tensor reduce_l2sq(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "reduce_l2sq");
  auto ad = a.data();
  auto bd = b.data();
  Real s = 0;
  for (std::size_t i = 0; i < ad.size(); ++i) s += (ad[i] - bd[i]) * (ad[i] - bd[i]);
  const Real n = static_cast<Real>(ad.size());
  const bool needs = Tape::needs_grad({&a, &b});
  Tensor out = make_output({1}, {s / n}, needs);
  if (needs) {
    tape.record(OpKind::ReduceL2Sq, {a, b}, out, [a, b, out, n]() mutable {
      const Real g = Real(2) * out.grad()[0] / n;
      auto ad = a.data();
      auto bd = b.data();
      std::vector<Real> da(ad.size());
      for (std::size_t i = 0; i < ad.size(); ++i) da[i] = g * (ad[i] - bd[i]);
      accumulate(a, da);
      if (b.requires_grad()) {
        for (Real& v : da) v = -v;
        accumulate(b, da);
      }
    });
  }
  return out;
}

Tensor affine(Tape& tape, const Tensor& input, Real scale, Real shift) {
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Affine, {input}, out, [input, out, scale]() mutable {
      auto dy = out.grad();
      std::vector<Real> dx(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = scale * dy[i];
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<Real> y(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) y[i] = ad[i] + bd[i];
  const bool needs = Tape::needs_grad({&a, &b});
  Tensor out = make_output(a.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Add, {a, b}, out, [a, b, out]() mutable {
      auto dy = out.grad();
      accumulate(a, dy);
      accumulate(b, dy);
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& input) {
  auto x = input.data();
  Real s = 0;
  for (Real v : x) s += v;
  const Real n = static_cast<Real>(x.size());
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output({1}, {s / n}, needs);
  if (needs) {
    tape.record(OpKind::Mean, {input}, out, [input, out, n]() mutable {
      std::vector<Real> dx(input.numel(), out.grad()[0] / n);
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor log(Tape& tape, const Tensor& input) {
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0)) throw NumericalError("log: non-positive input " + std::to_string(x[i]));
    y[i] = std::log(x[i]);
  }
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Log, {input}, out, [input, out]() mutable {
      auto dy = out.grad();
      auto x = input.data();
      std::vector<Real> dx(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] / x[i];
      accumulate(input, dx);
    });
  }
  return out;
}

Tensor clamp(Tape& tape, const Tensor& input, Real lo, Real hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must not exceed hi");
  auto x = input.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], lo, hi);
  const bool needs = Tape::needs_grad({&input});
  Tensor out = make_output(input.shape(), std::move(y), needs);
  if (needs) {
    tape.record(OpKind::Clamp, {input}, out, [input, out, lo, hi]() mutable {
      auto dy = out.grad();
      auto x = input.data();
      std::vector<Real> dx(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = (x[i] >= lo && x[i] <= hi) ? dy[i] : Real(0);
      accumulate(input, dx);
    });
  }
  return out;
}

}  // namespace deblur
