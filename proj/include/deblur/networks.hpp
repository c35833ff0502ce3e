#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "deblur/ops.hpp"
#include "deblur/optim.hpp"
#include "deblur/rng.hpp"

namespace deblur {

/// Declarative layer ladder shared by both networks.
///
/// Generator: encoder_filters are the output channels of the stride-`stride`
/// conv blocks; decoder_filters mirror them with one transposed-conv block per
/// encoder block, the last entry being the image channel count (3). Every
/// decoder block except the last is followed by a skip concatenation with the
/// encoder activation of the same resolution.
///
/// Discriminator: encoder_filters is the conv ladder; decoder_filters and the
/// dropout fields are ignored.
struct NetworkSpec {
  std::vector<int> encoder_filters{64, 128, 256, 512};
  std::vector<int> decoder_filters{256, 128, 64, 3};
  int kernel = 5;
  int stride = 2;
  double leak = 0.2;
  double dropout_rate = 0.5;
  /// Decoder block indices that apply dropout after their activation.
  std::vector<int> dropout_blocks{0, 1};
  bool normalize_first_layer = false;

  std::size_t depth() const { return encoder_filters.size(); }
  /// Spatial reduction of the encoder: stride^depth.
  std::size_t reduction() const;

  std::vector<std::string> generator_violations() const;
  std::vector<std::string> discriminator_violations(int image_size) const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Discriminator ladder matching the default generator.
NetworkSpec default_discriminator_spec();

/// Mirrored decoder ladder for an encoder ladder: reversed encoder without its
/// deepest entry, then 3 output channels.
std::vector<int> mirrored_decoder(const std::vector<int>& encoder_filters);

enum class NetworkKind { Generator, Discriminator };

struct NamedRunningStats {
  std::string name;  // e.g. "G.enc1.bn"; stored as <name>.running_mean / .running_var
  RunningStats stats;
};

/// One conv / transposed-conv block: indices into the owning network's
/// parameter and statistics lists. -1 when absent.
struct Block {
  int weight = -1;
  int bias = -1;
  int gamma = -1;
  int beta = -1;
  int stats = -1;
};

/// Instantiated parameter set for a generator or discriminator.
class Network {
 public:
  Network() = default;

  NetworkKind kind() const { return kind_; }
  const NetworkSpec& spec() const { return spec_; }
  /// Square input extent the discriminator head was sized for (0 for generators).
  int image_size() const { return image_size_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Freezing stops gradient recording through the parameters.
  void set_trainable(bool on);
  bool trainable() const { return trainable_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;

  std::vector<NamedRunningStats>& running_stats() { return stats_; }
  const std::vector<NamedRunningStats>& running_stats() const { return stats_; }

  std::size_t parameter_count() const;

  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  friend Network build_generator(const NetworkSpec&, Rng&);
  friend Network build_discriminator(const NetworkSpec&, int, Rng&);

  Block add_block(const std::string& prefix, std::size_t in, std::size_t out, std::size_t kernel, bool transposed,
                  bool normalized, Rng& rng);

  NetworkKind kind_ = NetworkKind::Generator;
  NetworkSpec spec_;
  int image_size_ = 0;
  Mode mode_ = Mode::Train;
  bool trainable_ = true;
  std::vector<Parameter> params_;
  std::vector<NamedRunningStats> stats_;
  std::vector<Block> blocks_;  // generator: encoder then decoder; discriminator: convs then head
};

/// Encoder-decoder generator with skip connections; weights ~ N(0, 0.02^2),
/// biases 0, batch-norm gamma 1 / beta 0. Throws ConfigError listing every
/// spec violation.
Network build_generator(const NetworkSpec& spec, Rng& rng);

/// Conditional discriminator over a (candidate, blurry) pair of 3-channel
/// images of extent `image_size`; ends in a full-grid conv to one logit per
/// batch item and a sigmoid.
Network build_discriminator(const NetworkSpec& spec, int image_size, Rng& rng);

struct GeneratorForwardOptions {
  /// Decoder skip index whose encoder tensor is replaced by zeros (-1: none).
  int zero_skip = -1;
};

/// Restored image in [-1, 1] from a blurry image in [-1, 1]. Spatial extent
/// must be divisible by stride^depth. `dropout_rng` drives train-mode dropout.
Tensor generator_forward(Tape& tape, Network& generator, const Tensor& blurry, Rng& dropout_rng,
                         const GeneratorForwardOptions& options = {});

/// Probability in (0, 1) that `candidate` is the real sharp image for
/// `blurry`; shape (N, 1, 1, 1).
Tensor discriminator_forward(Tape& tape, Network& discriminator, const Tensor& candidate, const Tensor& blurry);

/// Runs the generator in infer mode on an arbitrary-size image in [0, 1]:
/// reflect-pads to the next multiple of stride^depth, restores, crops back and
/// maps the result to [0, 1].
Tensor deblur_image(Network& generator, const Tensor& image01);

}  // namespace deblur
