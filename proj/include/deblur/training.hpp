#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "deblur/dataset.hpp"
#include "deblur/networks.hpp"
#include "deblur/optim.hpp"

namespace deblur {

struct TrainConfig {
  NetworkSpec generator;
  NetworkSpec discriminator = default_discriminator_spec();
  double lambda1 = 100;
  double lambda2 = 250;
  int dc_window = 15;
  AdamConfig adam;
  int d_steps = 1;
  int g_steps = 2;
  int crop = 64;
  int downsample_factor = 2;
  double noise_variance = 0;
  double kernel_length = 15;
  int epochs = 200;
  int batch = 1;
  std::uint64_t seed = 42;
  /// Iterations between checkpoints; 0 writes only the final one.
  int checkpoint_every = 0;
  /// Include per-step wall time in the JSON-lines log (breaks byte-identical logs).
  bool log_timing = false;

  /// Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  PipelineConfig pipeline() const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepReport {
  std::uint64_t iteration = 0;
  double d_loss = 0;
  double g_adv = 0;
  double g_content = 0;
  double g_darkchannel = 0;
  double g_total = 0;
  double wall_ms = 0;
};

std::string step_report_json(const StepReport& report, bool include_timing);

/// Sigmoid outputs are clamped to [eps, 1 - eps] before the logs.
inline constexpr Real kProbabilityEps = Real(1e-7);

/// -mean[log d_real + log(1 - d_fake)]. Throws NumericalError if an input lies
/// outside [0, 1].
Tensor discriminator_loss(Tape& tape, const Tensor& d_real, const Tensor& d_fake);

struct GeneratorLoss {
  Tensor total;
  double adversarial = 0;
  double content = 0;
  double dark_channel = 0;
};

/// mean[log(1 - d_fake)] + lambda1 * L1(restored, sharp) + lambda2 * DC(restored, sharp),
/// images in network range. With lambda2 == 0 the dark channel is not computed.
/// Throws NumericalError naming the first non-finite term.
GeneratorLoss generator_loss(Tape& tape, const Tensor& d_fake, const Tensor& restored, const Tensor& sharp,
                             double lambda1, double lambda2, int dc_window);

/// Both networks plus the position in the schedule.
struct TrainingState {
  Network generator;
  Network discriminator;
  std::uint64_t iteration = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch_in_epoch = 0;
};

TrainingState init_training(const TrainConfig& config);

/// One iteration on a batch in [0, 1]: `d_steps` discriminator updates, then
/// `g_steps` generator updates, each with a fresh generator forward. Returns
/// the report of the last generator step and advances `state.iteration`.
StepReport train_step(TrainingState& state, const Tensor& blurry01, const Tensor& sharp01, const TrainConfig& config);

/// Checkpoint file format, little-endian:
///   "DGC1", u32 version,
///   records { u32 name_len, name, u32 rank, u32 dims[rank], f32 data[] },
///   u32 CRC-32 of every preceding byte.
/// Records: parameters (generator then discriminator), batch-norm running
/// statistics, schedule counters, the config text, then Adam moments as
/// "<name>.m1" / "<name>.m2".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state, const TrainConfig& config);

/// Config stored in a checkpoint, after validating magic, version and CRC.
TrainConfig read_checkpoint_config(const std::filesystem::path& path);

/// Restores state into networks built from `config`; throws FormatError,
/// VersionError, CrcError, or ShapeMismatchError naming the first mismatching tensor.
TrainingState load_checkpoint(const std::filesystem::path& path, const TrainConfig& config);

struct LoopResult {
  std::filesystem::path final_checkpoint;
  std::size_t steps = 0;
  std::size_t skipped_samples = 0;
  bool interrupted = false;
};

struct LoopOptions {
  /// JSON-lines step log destination.
  std::ostream* log = nullptr;
  /// Warnings about skipped samples.
  std::ostream* warnings = nullptr;
  /// Polled between iterations; when set, a final checkpoint is flushed and the loop stops.
  const std::atomic<bool>* stop = nullptr;
  /// Resume from this checkpoint instead of a fresh init.
  std::filesystem::path resume_from;
  /// Stop after this many iterations in total (0: run all epochs).
  std::uint64_t max_iterations = 0;
};

/// Seeded epochs of train_step over the dataset with periodic checkpoints
/// named "ckpt_<iteration>.dgc" and a final "final.dgc" in `out_dir`.
/// Unreadable samples are skipped with a warning; an epoch where every
/// sample fails throws DataError.
LoopResult train_loop(const std::vector<DatasetEntry>& dataset, const TrainConfig& config,
                      const std::filesystem::path& out_dir, const LoopOptions& options = {});

}  // namespace deblur
