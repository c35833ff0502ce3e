#include "deblur/training.hpp"

#include <zlib.h>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "deblur/config.hpp"
#include "deblur/dark_channel.hpp"
#include "deblur/error.hpp"
#include "deblur/image.hpp"

namespace deblur {

namespace {

enum StreamTag : std::uint64_t { kGeneratorInit = 21, kDiscriminatorInit, kDropout };

void require_probabilities(const Tensor& t, const char* what) {
  for (Real v : t.data())
    if (!(v >= 0 && v <= 1))
      throw NumericalError(std::string(what) + " contains " + std::to_string(static_cast<double>(v)) +
                           ", outside [0, 1]; expected sigmoid outputs");
}

// log(clamp(p)) or log(1 - clamp(p)), averaged.
Tensor mean_log_probability(Tape& tape, const Tensor& p, bool complement) {
  Tensor q = clamp(tape, p, kProbabilityEps, Real(1) - kProbabilityEps);
  if (complement) q = affine(tape, q, Real(-1), Real(1));
  return mean(tape, log(tape, q));
}

double finite_or_throw(const Tensor& term, const char* name) {
  const double v = static_cast<double>(term.item());
  if (!std::isfinite(v)) throw NumericalError(std::string("generator loss: ") + name + " term is not finite");
  return v;
}

}  // namespace

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  for (const auto& s : generator.generator_violations()) v.push_back("generator: " + s);
  for (const auto& s : discriminator.discriminator_violations(crop)) v.push_back("discriminator: " + s);
  if (!(lambda1 >= 0)) v.push_back("lambda1 must be >= 0");
  if (!(lambda2 >= 0)) v.push_back("lambda2 must be >= 0");
  if (dc_window < 1 || dc_window % 2 == 0) v.push_back("dc_window must be a positive odd integer");
  if (!(adam.lr >= 0)) v.push_back("lr must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1)) v.push_back("beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) v.push_back("beta2 must be in [0, 1)");
  if (!(adam.eps > 0)) v.push_back("eps must be > 0");
  if (d_steps < 0) v.push_back("d_steps must be >= 0");
  if (g_steps < 1) v.push_back("g_steps must be >= 1");
  if (crop < 1) {
    v.push_back("crop must be >= 1");
  } else if (generator.stride >= 1 && static_cast<std::size_t>(crop) % generator.reduction() != 0) {
    v.push_back("crop " + std::to_string(crop) + " must be divisible by stride^depth = " +
                std::to_string(generator.reduction()));
  }
  if (downsample_factor < 1 || (downsample_factor & (downsample_factor - 1)) != 0)
    v.push_back("downsample_factor must be a power of two");
  if (!(noise_variance >= 0)) v.push_back("noise_variance must be >= 0");
  if (!(kernel_length >= 1)) v.push_back("kernel_length must be >= 1");
  if (epochs < 1) v.push_back("epochs must be >= 1");
  if (batch < 1) v.push_back("batch must be >= 1");
  if (checkpoint_every < 0) v.push_back("checkpoint_every must be >= 0");
  return v;
}

PipelineConfig TrainConfig::pipeline() const {
  PipelineConfig p;
  p.crop = static_cast<std::size_t>(crop);
  p.downsample_factor = static_cast<std::size_t>(downsample_factor);
  p.noise_variance = noise_variance;
  p.kernel_length = kernel_length;
  p.batch = static_cast<std::size_t>(batch);
  p.seed = seed;
  return p;
}

std::string step_report_json(const StepReport& r, bool include_timing) {
  nlohmann::ordered_json j{{"iteration", r.iteration}, {"d_loss", r.d_loss},   {"g_adv", r.g_adv},
                           {"g_content", r.g_content}, {"g_darkchannel", r.g_darkchannel}, {"g_total", r.g_total}};
  if (include_timing) j["wall_ms"] = r.wall_ms;
  return j.dump();
}

Tensor discriminator_loss(Tape& tape, const Tensor& d_real, const Tensor& d_fake) {
  require_probabilities(d_real, "discriminator_loss: d_real");
  require_probabilities(d_fake, "discriminator_loss: d_fake");
  const Tensor sum = add(tape, mean_log_probability(tape, d_real, false), mean_log_probability(tape, d_fake, true));
  return affine(tape, sum, Real(-1), Real(0));
}

GeneratorLoss generator_loss(Tape& tape, const Tensor& d_fake, const Tensor& restored, const Tensor& sharp,
                             double lambda1, double lambda2, int dc_window) {
  require_probabilities(d_fake, "generator_loss: d_fake");
  GeneratorLoss out;
  const Tensor adversarial = mean_log_probability(tape, d_fake, true);
  const Tensor content = reduce_l1(tape, restored, sharp.detach());
  out.adversarial = finite_or_throw(adversarial, "adversarial");
  out.content = finite_or_throw(content, "content");
  out.total = add(tape, adversarial, affine(tape, content, static_cast<Real>(lambda1), Real(0)));
  if (lambda2 != 0) {
    const Tensor dc = dark_channel_loss(tape, restored, sharp, dc_window);
    out.dark_channel = finite_or_throw(dc, "dark channel");
    out.total = add(tape, out.total, affine(tape, dc, static_cast<Real>(lambda2), Real(0)));
  }
  finite_or_throw(out.total, "total");
  return out;
}

TrainingState init_training(const TrainConfig& config) {
  const auto problems = config.violations();
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  Rng g_rng = make_rng(config.seed, {kGeneratorInit});
  Rng d_rng = make_rng(config.seed, {kDiscriminatorInit});
  return TrainingState{build_generator(config.generator, g_rng),
                       build_discriminator(config.discriminator, config.crop, d_rng)};
}

StepReport train_step(TrainingState& state, const Tensor& blurry01, const Tensor& sharp01, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Network& g = state.generator;
  Network& d = state.discriminator;
  const Tensor blurry = to_network_range(blurry01);
  const Tensor sharp = to_network_range(sharp01);
  g.set_mode(Mode::Train);
  d.set_mode(Mode::Train);
  StepReport report;
  report.iteration = state.iteration;
  std::uint64_t substep = 0;

  g.set_trainable(false);
  d.set_trainable(true);
  for (int s = 0; s < config.d_steps; ++s) {
    Tape tape;
    Rng dropout_rng = make_rng(config.seed, {kDropout, state.iteration, substep++});
    const Tensor fake = generator_forward(tape, g, blurry, dropout_rng);
    const Tensor d_real = discriminator_forward(tape, d, sharp, blurry);
    const Tensor d_fake = discriminator_forward(tape, d, fake, blurry);
    const Tensor loss = discriminator_loss(tape, d_real, d_fake);
    report.d_loss = static_cast<double>(loss.item());
    if (!std::isfinite(report.d_loss)) throw NumericalError("discriminator loss is not finite");
    tape.backward(loss);
    adam_step(d.parameters(), config.adam);
  }

  g.set_trainable(true);
  d.set_trainable(false);
  for (int s = 0; s < config.g_steps; ++s) {
    Tape tape;
    Rng dropout_rng = make_rng(config.seed, {kDropout, state.iteration, substep++});
    const Tensor restored = generator_forward(tape, g, blurry, dropout_rng);
    const Tensor d_fake = discriminator_forward(tape, d, restored, blurry);
    const GeneratorLoss loss =
        generator_loss(tape, d_fake, restored, sharp, config.lambda1, config.lambda2, config.dc_window);
    tape.backward(loss.total);
    adam_step(g.parameters(), config.adam);
    report.g_adv = loss.adversarial;
    report.g_content = loss.content;
    report.g_darkchannel = loss.dark_channel;
    report.g_total = static_cast<double>(loss.total.item());
  }
  d.set_trainable(true);

  ++state.iteration;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', '1'};

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void record(const Record& r) {
    u32(static_cast<std::uint32_t>(r.name.size()));
    raw(r.name.data(), r.name.size());
    u32(static_cast<std::uint32_t>(r.dims.size()));
    for (std::uint32_t d : r.dims) u32(d);
    for (float f : r.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      u32(bits);
    }
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  bool done() const { return pos_ >= end_; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  Record record() {
    Record r;
    const std::uint32_t len = u32();
    need(len);
    r.name.assign(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    const std::uint32_t rank = u32();
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(u32());
      count *= r.dims.back();
    }
    need(4 * count);
    r.data.resize(count);
    for (float& f : r.data) {
      const std::uint32_t bits = u32();
      std::memcpy(&f, &bits, 4);
    }
    return r;
  }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("checkpoint: record overruns payload");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 8;
};

std::vector<std::uint32_t> dims_of(const Shape& s) { return {s.begin(), s.end()}; }

Record tensor_record(const std::string& name, const Shape& shape, std::span<const Real> values) {
  Record r{name, dims_of(shape), {}};
  r.data.reserve(values.size());
  for (Real v : values) r.data.push_back(static_cast<float>(v));
  return r;
}

// Counters as four 16-bit limbs, each exact in a 32-bit float.
Record counter_record(const std::string& name, std::uint64_t v) {
  Record r{name, {4}, {}};
  for (int i = 0; i < 4; ++i) r.data.push_back(static_cast<float>((v >> (16 * i)) & 0xffff));
  return r;
}

std::uint64_t counter_value(const Record& r) {
  if (r.data.size() != 4) throw FormatError("checkpoint: counter '" + r.name + "' malformed");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint64_t>(r.data[static_cast<std::size_t>(i)]) << (16 * i);
  return v;
}

Record text_record(const std::string& name, const std::string& text) {
  Record r{name, {static_cast<std::uint32_t>(text.size())}, {}};
  for (unsigned char c : text) r.data.push_back(static_cast<float>(c));
  return r;
}

std::string record_text(const Record& r) {
  std::string out;
  for (float f : r.data) out.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  return out;
}

void append_network(std::vector<Record>& records, const Network& net) {
  for (const Parameter& p : net.parameters()) records.push_back(tensor_record(p.name, p.value.shape(), p.value.data()));
}

void append_stats(std::vector<Record>& records, const Network& net) {
  for (const NamedRunningStats& s : net.running_stats()) {
    const Shape shape{s.stats.mean.size()};
    records.push_back(tensor_record(s.name + ".running_mean", shape, s.stats.mean));
    records.push_back(tensor_record(s.name + ".running_var", shape, s.stats.var));
  }
}

void append_moments(std::vector<Record>& records, const Network& net) {
  for (const Parameter& p : net.parameters()) {
    records.push_back(tensor_record(p.name + ".m1", p.value.shape(), p.first_moment));
    records.push_back(tensor_record(p.name + ".m2", p.value.shape(), p.second_moment));
  }
}

std::uint64_t adam_steps(const Network& net) {
  return net.parameters().empty() ? 0 : net.parameters().front().step_count;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

/// Validates framing and returns the records in file order.
std::vector<Record> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(where + ": bad magic");
  if (bytes.size() < 12) throw CrcError(where + ": file truncated before the checksum");
  const std::uint32_t version = static_cast<std::uint32_t>(bytes[4]) | static_cast<std::uint32_t>(bytes[5]) << 8 |
                                static_cast<std::uint32_t>(bytes[6]) << 16 | static_cast<std::uint32_t>(bytes[7]) << 24;
  if (version != kCheckpointVersion)
    throw VersionError(where + ": format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  const std::size_t end = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[end + static_cast<std::size_t>(i)]) << (8 * i);
  if (crc_of(bytes.data(), end) != stored) throw CrcError(where + ": CRC mismatch (corrupt or truncated)");
  Reader reader(bytes, end);
  std::vector<Record> records;
  while (!reader.done()) records.push_back(reader.record());
  return records;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state, const TrainConfig& config) {
  std::vector<Record> records;
  append_network(records, state.generator);
  append_network(records, state.discriminator);
  append_stats(records, state.generator);
  append_stats(records, state.discriminator);
  records.push_back(counter_record("train.iteration", state.iteration));
  records.push_back(counter_record("train.epoch", state.epoch));
  records.push_back(counter_record("train.batch_in_epoch", state.batch_in_epoch));
  records.push_back(counter_record("G.adam_steps", adam_steps(state.generator)));
  records.push_back(counter_record("D.adam_steps", adam_steps(state.discriminator)));
  records.push_back(text_record("meta.config", dump_config(config)));
  append_moments(records, state.generator);
  append_moments(records, state.discriminator);

  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  for (const Record& r : records) w.record(r);
  w.u32(crc_of(w.bytes().data(), w.bytes().size()));

  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw DataError("write failed for checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainConfig read_checkpoint_config(const std::filesystem::path& path) {
  for (const Record& r : read_records(path))
    if (r.name == "meta.config") return parse_config(record_text(r));
  throw FormatError("checkpoint " + path.string() + ": no stored config");
}

TrainingState load_checkpoint(const std::filesystem::path& path, const TrainConfig& config) {
  const std::vector<Record> records = read_records(path);
  TrainingState state = init_training(config);

  // Every tensor the config expects, by record name.
  std::map<std::string, std::pair<Shape, std::span<Real>>> expected;
  std::map<std::string, std::vector<Real>*> moments;
  for (Network* net : {&state.generator, &state.discriminator}) {
    for (Parameter& p : net->parameters()) {
      expected[p.name] = {p.value.shape(), p.value.mutable_data()};
      expected[p.name + ".m1"] = {p.value.shape(), p.first_moment};
      expected[p.name + ".m2"] = {p.value.shape(), p.second_moment};
    }
    for (NamedRunningStats& s : net->running_stats()) {
      expected[s.name + ".running_mean"] = {Shape{s.stats.mean.size()}, s.stats.mean};
      expected[s.name + ".running_var"] = {Shape{s.stats.var.size()}, s.stats.var};
    }
  }

  std::map<std::string, const Record*> counters;
  std::size_t matched = 0;
  for (const Record& r : records) {
    if (r.name.starts_with("train.") || r.name.ends_with(".adam_steps")) {
      counters[r.name] = &r;
      continue;
    }
    if (r.name.starts_with("meta.")) continue;
    const auto it = expected.find(r.name);
    if (it == expected.end())
      throw ShapeMismatchError("checkpoint " + path.string() + ": tensor '" + r.name + "' is not part of this network spec");
    const Shape& shape = it->second.first;
    if (r.dims != dims_of(shape))
      throw ShapeMismatchError("checkpoint " + path.string() + ": tensor '" + r.name + "' has shape " +
                               shape_to_string(Shape(r.dims.begin(), r.dims.end())) + ", spec expects " +
                               shape_to_string(shape));
    std::span<Real> dst = it->second.second;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(r.data[i]);
    ++matched;
  }
  if (matched != expected.size()) {
    for (const auto& [name, slot] : expected) {
      const bool present = std::any_of(records.begin(), records.end(), [&](const Record& r) { return r.name == name; });
      if (!present) throw ShapeMismatchError("checkpoint " + path.string() + ": tensor '" + name + "' missing");
    }
  }
  auto counter = [&](const std::string& name) {
    const auto it = counters.find(name);
    if (it == counters.end()) throw FormatError("checkpoint " + path.string() + ": missing '" + name + "'");
    return counter_value(*it->second);
  };
  state.iteration = counter("train.iteration");
  state.epoch = counter("train.epoch");
  state.batch_in_epoch = counter("train.batch_in_epoch");
  for (Parameter& p : state.generator.parameters()) p.step_count = counter("G.adam_steps");
  for (Parameter& p : state.discriminator.parameters()) p.step_count = counter("D.adam_steps");
  return state;
}

// ---------------------------------------------------------------------------
// Loop

LoopResult train_loop(const std::vector<DatasetEntry>& dataset, const TrainConfig& config,
                      const std::filesystem::path& out_dir, const LoopOptions& options) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  const std::size_t batch = static_cast<std::size_t>(config.batch);
  const std::size_t batches = batches_per_epoch(dataset.size(), batch);
  if (batches == 0)
    throw DataError("dataset of " + std::to_string(dataset.size()) + " pairs yields no full batch of " +
                    std::to_string(batch));
  std::filesystem::create_directories(out_dir);
  TrainingState state = options.resume_from.empty() ? init_training(config) : load_checkpoint(options.resume_from, config);
  const PipelineConfig pipeline = config.pipeline();
  LoopResult result;

  auto stop_requested = [&] {
    return (options.stop && options.stop->load()) ||
           (options.max_iterations && state.iteration >= options.max_iterations);
  };

  std::vector<std::size_t> order;
  std::size_t attempted = 0, failed = 0;
  while (state.epoch < static_cast<std::uint64_t>(config.epochs) && !stop_requested()) {
    if (order.empty() || state.batch_in_epoch == 0) order = epoch_order(dataset.size(), config.seed, state.epoch);
    std::vector<Tensor> blurry, sharp;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t index = order[state.batch_in_epoch * batch + i];
      ++attempted;
      try {
        ImagePair pair = load_sample(dataset[index], pipeline, state.epoch, index);
        blurry.push_back(pair.blurry);
        sharp.push_back(pair.sharp);
      } catch (const Error& e) {
        ++result.skipped_samples;
        ++failed;
        if (options.warnings) *options.warnings << "warning: skipping '" << dataset[index].id << "': " << e.what() << "\n";
      }
    }
    if (!blurry.empty()) {
      const StepReport report = train_step(state, stack_batch(blurry), stack_batch(sharp), config);
      ++result.steps;
      if (options.log) *options.log << step_report_json(report, config.log_timing) << "\n" << std::flush;
    }
    if (++state.batch_in_epoch == batches) {
      if (failed == attempted)
        throw DataError("every sample failed to load in epoch " + std::to_string(state.epoch));
      ++state.epoch;
      state.batch_in_epoch = 0;
      attempted = failed = 0;
    }
    if (!blurry.empty() && config.checkpoint_every > 0 &&
        state.iteration % static_cast<std::uint64_t>(config.checkpoint_every) == 0)
      save_checkpoint(out_dir / ("ckpt_" + std::to_string(state.iteration) + ".dgc"), state, config);
  }
  result.interrupted = options.stop && options.stop->load();
  result.final_checkpoint = out_dir / "final.dgc";
  save_checkpoint(result.final_checkpoint, state, config);
  return result;
}

}  // namespace deblur
