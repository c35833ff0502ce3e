#include "deblur/networks.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>

#include "deblur/error.hpp"
#include "deblur/image.hpp"

namespace deblur {

namespace {

constexpr double kInitStd = 0.02;
constexpr int kImageChannels = 3;

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "; " : "") << items[i];
  return os.str();
}

// Rethrows shape and configuration errors with the block that raised them.
template <typename Fn>
auto in_block(const std::string& label, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DimensionError& e) {
    throw DimensionError(label + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(label + ": " + e.what());
  }
}

std::vector<std::string> common_violations(const NetworkSpec& spec) {
  std::vector<std::string> v;
  if (spec.encoder_filters.empty()) v.push_back("encoder_filters must not be empty");
  for (int f : spec.encoder_filters)
    if (f < 1) v.push_back("encoder_filters entries must be >= 1");
  if (spec.kernel < 1 || spec.kernel % 2 == 0) v.push_back("kernel must be a positive odd integer");
  if (spec.stride < 1) v.push_back("stride must be >= 1");
  if (!(spec.leak > 0 && spec.leak < 1)) v.push_back("leak must be in (0, 1)");
  return v;
}

Real leak_of(const Network& net) { return static_cast<Real>(net.spec().leak); }

}  // namespace

std::size_t NetworkSpec::reduction() const {
  std::size_t r = 1;
  for (std::size_t i = 0; i < depth(); ++i) r *= static_cast<std::size_t>(std::max(stride, 1));
  return r;
}

std::vector<std::string> NetworkSpec::generator_violations() const {
  auto v = common_violations(*this);
  if (decoder_filters.size() != encoder_filters.size())
    v.push_back("decoder_filters must have as many entries as encoder_filters (" +
                std::to_string(encoder_filters.size()) + "), got " + std::to_string(decoder_filters.size()));
  for (int f : decoder_filters)
    if (f < 1) v.push_back("decoder_filters entries must be >= 1");
  if (!decoder_filters.empty() && decoder_filters.back() != kImageChannels)
    v.push_back("last decoder_filters entry must be " + std::to_string(kImageChannels) + " (image channels)");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) v.push_back("dropout_rate must be in [0, 1)");
  for (int b : dropout_blocks)
    if (b < 0 || static_cast<std::size_t>(b) + 1 >= decoder_filters.size())
      v.push_back("dropout_blocks entry " + std::to_string(b) + " is not a normalized decoder block");
  return v;
}

std::vector<std::string> NetworkSpec::discriminator_violations(int image_size) const {
  auto v = common_violations(*this);
  if (image_size < 1) {
    v.push_back("image size must be >= 1");
  } else if (stride >= 1 && static_cast<std::size_t>(image_size) % reduction() != 0) {
    v.push_back("image size " + std::to_string(image_size) + " not divisible by stride^depth = " +
                std::to_string(reduction()));
  } else if (stride >= 1 && static_cast<std::size_t>(image_size) / reduction() < 1) {
    v.push_back("discriminator too deep for image size " + std::to_string(image_size));
  }
  return v;
}

NetworkSpec default_discriminator_spec() {
  NetworkSpec spec;
  spec.decoder_filters.clear();
  spec.dropout_blocks.clear();
  spec.dropout_rate = 0;
  return spec;
}

std::vector<int> mirrored_decoder(const std::vector<int>& encoder_filters) {
  std::vector<int> dec;
  for (std::size_t i = encoder_filters.size(); i-- > 1;) dec.push_back(encoder_filters[i - 1]);
  dec.push_back(kImageChannels);
  return dec;
}

void Network::set_trainable(bool on) {
  trainable_ = on;
  for (Parameter& p : params_) p.value.set_requires_grad(on);
}

Parameter& Network::parameter(std::string_view name) {
  for (Parameter& p : params_)
    if (p.name == name) return p;
  throw StateError("no parameter named '" + std::string(name) + "'");
}

const Parameter& Network::parameter(std::string_view name) const {
  return const_cast<Network*>(this)->parameter(name);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel();
  return n;
}

Block Network::add_block(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k,
                         bool transposed, bool normalized, Rng& rng) {
  // conv weights are (out, in, k, k); transposed-conv weights are (in, out, k, k)
  const std::size_t weight_rows = transposed ? in : out;
  const std::size_t weight_cols = transposed ? out : in;
  const std::size_t bias_len = out;
  std::normal_distribution<double> init(0.0, kInitStd);
  std::vector<Real> w(weight_rows * weight_cols * k * k);
  for (Real& v : w) v = to_storage(static_cast<Real>(init(rng)));
  Block b;
  b.weight = static_cast<int>(params_.size());
  params_.emplace_back(prefix + ".weight", Tensor({weight_rows, weight_cols, k, k}, std::move(w)));
  b.bias = static_cast<int>(params_.size());
  params_.emplace_back(prefix + ".bias", Tensor({bias_len}, Real(0)));
  if (normalized) {
    b.gamma = static_cast<int>(params_.size());
    params_.emplace_back(prefix + ".bn.gamma", Tensor({bias_len}, Real(1)));
    b.beta = static_cast<int>(params_.size());
    params_.emplace_back(prefix + ".bn.beta", Tensor({bias_len}, Real(0)));
    b.stats = static_cast<int>(stats_.size());
    stats_.push_back({prefix + ".bn", RunningStats::identity(bias_len)});
  }
  blocks_.push_back(b);
  return b;
}

Network build_generator(const NetworkSpec& spec, Rng& rng) {
  const auto violations = spec.generator_violations();
  if (!violations.empty()) throw ConfigError("invalid generator spec: " + join(violations));
  Network net;
  net.kind_ = NetworkKind::Generator;
  net.spec_ = spec;
  const std::size_t n = spec.depth();
  const auto k = static_cast<std::size_t>(spec.kernel);
  std::size_t in = kImageChannels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto out = static_cast<std::size_t>(spec.encoder_filters[i]);
    net.add_block("G.enc" + std::to_string(i + 1), in, out, k, false, i > 0 || spec.normalize_first_layer, rng);
    in = out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto out = static_cast<std::size_t>(spec.decoder_filters[i]);
    const bool last = i + 1 == n;
    net.add_block("G.dec" + std::to_string(i + 1), in, out, k, true, !last, rng);
    if (!last) in = out + static_cast<std::size_t>(spec.encoder_filters[n - 2 - i]);
  }
  return net;
}

Network build_discriminator(const NetworkSpec& spec, int image_size, Rng& rng) {
  const auto violations = spec.discriminator_violations(image_size);
  if (!violations.empty()) throw ConfigError("invalid discriminator spec: " + join(violations));
  Network net;
  net.kind_ = NetworkKind::Discriminator;
  net.spec_ = spec;
  net.image_size_ = image_size;
  const auto k = static_cast<std::size_t>(spec.kernel);
  std::size_t in = 2 * kImageChannels;
  for (std::size_t i = 0; i < spec.depth(); ++i) {
    const auto out = static_cast<std::size_t>(spec.encoder_filters[i]);
    net.add_block("D.conv" + std::to_string(i + 1), in, out, k, false, i > 0 || spec.normalize_first_layer, rng);
    in = out;
  }
  // Head: one kernel covering the whole remaining grid.
  const std::size_t grid = static_cast<std::size_t>(image_size) / spec.reduction();
  net.add_block("D.head", in, 1, grid, false, false, rng);
  return net;
}

namespace {

Tensor block_norm_act(Tape& tape, Network& net, const Block& b, Tensor x) {
  auto& params = net.parameters();
  if (b.gamma >= 0) {
    x = batch_norm(tape, x, params[static_cast<std::size_t>(b.gamma)].value,
                   params[static_cast<std::size_t>(b.beta)].value, net.mode(),
                   net.running_stats()[static_cast<std::size_t>(b.stats)].stats);
  }
  return leaky_relu(tape, x, leak_of(net));
}

}  // namespace

Tensor generator_forward(Tape& tape, Network& g, const Tensor& blurry, Rng& dropout_rng,
                         const GeneratorForwardOptions& options) {
  if (g.kind() != NetworkKind::Generator) throw StateError("generator_forward called with a discriminator");
  const NetworkSpec& spec = g.spec();
  if (blurry.rank() != 4 || blurry.dim(1) != static_cast<std::size_t>(kImageChannels))
    throw DimensionError("generator input must be (N, 3, H, W), got " + shape_to_string(blurry.shape()));
  const std::size_t r = spec.reduction();
  if (blurry.dim(2) % r != 0 || blurry.dim(3) % r != 0)
    throw ConfigError("generator input " + std::to_string(blurry.dim(2)) + "x" + std::to_string(blurry.dim(3)) +
                      " is not divisible by stride^depth = " + std::to_string(r));
  auto& params = g.parameters();
  const auto& blocks = g.blocks();
  const std::size_t n = spec.depth();
  const int pad = spec.kernel / 2;
  const int out_pad = spec.stride - 1;

  std::vector<Tensor> skips;
  Tensor x = blurry;
  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = blocks[i];
    x = in_block("generator encoder block " + std::to_string(i + 1), [&] {
      Tensor y = conv2d(tape, x, params[static_cast<std::size_t>(b.weight)].value,
                        params[static_cast<std::size_t>(b.bias)].value, spec.stride, pad);
      return block_norm_act(tape, g, b, y);
    });
    skips.push_back(x);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = blocks[n + i];
    const bool last = i + 1 == n;
    x = in_block("generator decoder block " + std::to_string(i + 1), [&] {
      Tensor y = transposed_conv2d(tape, x, params[static_cast<std::size_t>(b.weight)].value,
                                   params[static_cast<std::size_t>(b.bias)].value, spec.stride, pad, out_pad);
      if (last) return tanh(tape, y);
      y = block_norm_act(tape, g, b, y);
      const bool drop = std::find(spec.dropout_blocks.begin(), spec.dropout_blocks.end(), static_cast<int>(i)) !=
                        spec.dropout_blocks.end();
      if (drop) y = dropout(tape, y, static_cast<Real>(spec.dropout_rate), g.mode(), dropout_rng);
      Tensor skip = skips[n - 2 - i];
      if (options.zero_skip == static_cast<int>(i)) skip = Tensor(skip.shape(), Real(0));
      return concat_channels(tape, y, skip);
    });
  }
  return x;
}

Tensor discriminator_forward(Tape& tape, Network& d, const Tensor& candidate, const Tensor& blurry) {
  if (d.kind() != NetworkKind::Discriminator) throw StateError("discriminator_forward called with a generator");
  const auto size = static_cast<std::size_t>(d.image_size());
  for (const Tensor* t : {&candidate, &blurry})
    if (t->rank() != 4 || t->dim(1) != static_cast<std::size_t>(kImageChannels) || t->dim(2) != size ||
        t->dim(3) != size)
      throw DimensionError("discriminator inputs must be (N, 3, " + std::to_string(size) + ", " +
                           std::to_string(size) + "), got " + shape_to_string(t->shape()));
  const NetworkSpec& spec = d.spec();
  auto& params = d.parameters();
  const auto& blocks = d.blocks();
  Tensor x = concat_channels(tape, candidate, blurry);
  for (std::size_t i = 0; i < spec.depth(); ++i) {
    const Block& b = blocks[i];
    x = in_block("discriminator block " + std::to_string(i + 1), [&] {
      Tensor y = conv2d(tape, x, params[static_cast<std::size_t>(b.weight)].value,
                        params[static_cast<std::size_t>(b.bias)].value, spec.stride, spec.kernel / 2);
      return block_norm_act(tape, d, b, y);
    });
  }
  const Block& head = blocks.back();
  Tensor logit = in_block("discriminator head", [&] {
    return conv2d(tape, x, params[static_cast<std::size_t>(head.weight)].value,
                  params[static_cast<std::size_t>(head.bias)].value, 1, 0);
  });
  return sigmoid(tape, logit);
}

Tensor deblur_image(Network& g, const Tensor& image01) {
  if (image01.rank() != 4) throw DimensionError("deblur_image: expected an NCHW image");
  const std::size_t r = g.spec().reduction();
  const std::size_t h = image01.dim(2), w = image01.dim(3);
  const std::size_t ph = (r - h % r) % r, pw = (r - w % r) % r;
  const Tensor padded = (ph || pw) ? reflect_pad(image01, ph, pw) : image01;

  const Mode previous_mode = g.mode();
  const bool previous_trainable = g.trainable();
  g.set_mode(Mode::Infer);
  g.set_trainable(false);
  Tensor restored;
  try {
    Tape tape;
    Rng unused(0);
    restored = generator_forward(tape, g, to_network_range(padded), unused);
  } catch (...) {
    g.set_mode(previous_mode);
    g.set_trainable(previous_trainable);
    throw;
  }
  g.set_mode(previous_mode);
  g.set_trainable(previous_trainable);
  const Tensor out = from_network_range(restored);
  return (ph || pw) ? crop(out, 0, 0, h, w) : out;
}

}  // namespace deblur
