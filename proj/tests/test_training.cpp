#include <cmath>
#include <fstream>
#include <sstream>

#include "deblur/config.hpp"
#include "deblur/dark_channel.hpp"
#include "deblur/dataset.hpp"
#include "deblur/error.hpp"
#include "deblur/image.hpp"
#include "deblur/image_io.hpp"
#include "deblur/training.hpp"
#include "support.hpp"

using namespace deblur;
using namespace testing;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.generator.encoder_filters = {4, 8};
  c.generator.decoder_filters = mirrored_decoder(c.generator.encoder_filters);
  c.generator.dropout_blocks = {0};
  c.discriminator.encoder_filters = {4, 8};
  c.crop = 16;
  c.dc_window = 3;
  c.kernel_length = 5;
  c.epochs = 1;
  c.seed = 7;
  return c;
}

// sharp/ only; blur is synthesized per sample
std::vector<DatasetEntry> write_dataset(const fs::path& root, int count, std::size_t size = 32) {
  fs::create_directories(root / "sharp");
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(99, {static_cast<std::uint64_t>(i)});
    save_image(synthetic_sharp_image(size, size, rng), root / "sharp" / ("img" + std::to_string(i) + ".png"));
  }
  return list_dataset(root);
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<Real>> snapshot(const Network& n) {
  std::vector<std::vector<Real>> out;
  for (const Parameter& p : n.parameters()) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

std::pair<Tensor, Tensor> sample_pair(std::uint64_t seed) {
  Rng rng(seed);
  const Tensor sharp = uniform({1, 3, 16, 16}, rng, 0, 1);
  Tensor blurry(sharp.shape());
  for (std::size_t i = 0; i < sharp.numel(); ++i)
    blurry.mutable_data()[i] = std::clamp(sharp[i] + Real(0.1) * std::sin(Real(i)), Real(0), Real(1));
  return {blurry, sharp};
}

std::string log_of(const std::vector<DatasetEntry>& data, const TrainConfig& cfg, const fs::path& out,
                   LoopOptions opt = {}) {
  std::ostringstream log;
  opt.log = &log;
  train_loop(data, cfg, out, opt);
  return log.str();
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("discriminator loss closed forms") {
    Tape tape;
    const Tensor half(Shape{1}, 0.5);
    CHECK(discriminator_loss(tape, half, half).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    const double perfect =
        discriminator_loss(tape, Tensor(Shape{1}, 1.0), Tensor(Shape{1}, 0.0)).item();
    CHECK(perfect >= 0);
    CHECK(perfect < 1e-6);
  }

  TEST_CASE("generator adversarial term at d_fake = 0.5 with perfect reconstruction") {
    Rng rng(1);
    const Tensor img = uniform({1, 3, 8, 8}, rng);
    Tape tape;
    const GeneratorLoss l = generator_loss(tape, Tensor(Shape{1}, 0.5), img, img, 100, 250, 3);
    CHECK(l.total.item() == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(l.content == 0);
    CHECK(l.dark_channel == 0);
  }

  TEST_CASE("zero lambdas reduce to the adversarial term") {
    Rng rng(2);
    const Tensor a = uniform({1, 3, 8, 8}, rng), b = uniform({1, 3, 8, 8}, rng);
    Tape tape;
    const GeneratorLoss l = generator_loss(tape, Tensor(Shape{1}, 0.3), a, b, 0, 0, 3);
    CHECK(l.total.item() == l.adversarial);
    CHECK(l.adversarial == doctest::Approx(std::log(0.7)).epsilon(1e-12));
  }

  TEST_CASE("total recomposes from separately evaluated terms") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const Tensor a = uniform({2, 3, 8, 8}, rng), b = uniform({2, 3, 8, 8}, rng);
      const Tensor d = uniform({2}, rng, 0.05, 0.95);
      Tape tape;
      const GeneratorLoss l = generator_loss(tape, d, a, b, 100, 250, 3);
      Tape fresh;
      double adv = 0;
      for (Real p : d.data()) adv += std::log(1 - static_cast<double>(p));
      adv /= 2;
      const double l1 = static_cast<double>(reduce_l1(fresh, a, b).item());
      const double dc = static_cast<double>(dark_channel_loss(fresh, a, b, 3).item());
      CHECK(static_cast<double>(l.total.item()) == doctest::Approx(adv + 100 * l1 + 250 * dc).epsilon(1e-6));
      CHECK(l.adversarial == doctest::Approx(adv).epsilon(1e-12));
    }
  }

  TEST_CASE("dark channel prior is absent from the tape when lambda2 is zero") {
    Rng rng(3);
    const Tensor a = uniform({1, 3, 8, 8}, rng, -1, 1, true), b = uniform({1, 3, 8, 8}, rng);
    Tape off, on;
    generator_loss(off, Tensor(Shape{1}, 0.4), a, b, 100, 0, 3);
    generator_loss(on, Tensor(Shape{1}, 0.4), a, b, 100, 250, 3);
    CHECK(off.count(OpKind::MinPoolChannelsWindow) == 0);
    CHECK(on.count(OpKind::MinPoolChannelsWindow) >= 1);
  }

  TEST_CASE("probabilities outside [0,1] and NaN are rejected") {
    Tape tape;
    const Tensor img(Shape{1, 3, 8, 8});
    CHECK_THROWS_AS(discriminator_loss(tape, Tensor(Shape{1}, 1.5), Tensor(Shape{1}, 0.5)), NumericalError);
    CHECK_THROWS_AS(generator_loss(tape, Tensor(Shape{1}, std::nan("")), img, img, 1, 1, 3), NumericalError);
    Tensor bad = img.detach();
    bad.mutable_data()[3] = std::nan("");
    try {
      generator_loss(tape, Tensor(Shape{1}, 0.5), bad, img, 1, 0, 3);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("content") != std::string::npos);
    }
  }
}

TEST_SUITE("train_step") {
  TEST_CASE("zero learning rate leaves parameters bit-identical") {
    TrainConfig cfg = tiny_config();
    cfg.adam.lr = 0;
    TrainingState s = init_training(cfg);
    const auto g0 = snapshot(s.generator), d0 = snapshot(s.discriminator);
    const auto [blurry, sharp] = sample_pair(1);
    train_step(s, blurry, sharp, cfg);
    CHECK(snapshot(s.generator) == g0);
    CHECK(snapshot(s.discriminator) == d0);
    CHECK(s.iteration == 1);
  }

  TEST_CASE("fixed seed gives identical reports across fresh runs") {
    const TrainConfig cfg = tiny_config();
    const auto [blurry, sharp] = sample_pair(2);
    std::vector<std::string> runs;
    for (int r = 0; r < 2; ++r) {
      TrainingState s = init_training(cfg);
      std::string log;
      for (int i = 0; i < 3; ++i) log += step_report_json(train_step(s, blurry, sharp, cfg), false) + "\n";
      runs.push_back(log);
    }
    CHECK(runs[0] == runs[1]);
  }

  TEST_CASE("report decomposes into its weighted terms") {
    const TrainConfig cfg = tiny_config();
    TrainingState s = init_training(cfg);
    const auto [blurry, sharp] = sample_pair(3);
    for (int i = 0; i < 4; ++i) {
      const StepReport r = train_step(s, blurry, sharp, cfg);
      CHECK(r.g_total == doctest::Approx(r.g_adv + cfg.lambda1 * r.g_content + cfg.lambda2 * r.g_darkchannel)
                             .epsilon(1e-9));
      CHECK(std::isfinite(r.d_loss));
    }
  }

  TEST_CASE("generator updates leave the discriminator untouched") {
    TrainConfig cfg = tiny_config();
    cfg.d_steps = 0;
    TrainingState s = init_training(cfg);
    const auto g0 = snapshot(s.generator), d0 = snapshot(s.discriminator);
    const auto [blurry, sharp] = sample_pair(4);
    train_step(s, blurry, sharp, cfg);
    CHECK(snapshot(s.discriminator) == d0);
    CHECK(snapshot(s.generator) != g0);
  }

  TEST_CASE("discriminator update with a frozen generator leaves it untouched") {
    TrainConfig cfg = tiny_config();
    TrainingState s = init_training(cfg);
    const auto g0 = snapshot(s.generator);
    const auto [blurry, sharp] = sample_pair(5);
    s.generator.set_trainable(false);
    Tape tape;
    Rng drop(0);
    const Tensor b = to_network_range(blurry), sh = to_network_range(sharp);
    const Tensor fake = generator_forward(tape, s.generator, b, drop);
    const Tensor loss = discriminator_loss(tape, discriminator_forward(tape, s.discriminator, sh, b),
                                           discriminator_forward(tape, s.discriminator, fake, b));
    tape.backward(loss);
    adam_step(s.discriminator.parameters(), cfg.adam);
    CHECK(snapshot(s.generator) == g0);
    for (const Parameter& p : s.generator.parameters()) CHECK_FALSE(p.value.has_grad());
  }

  TEST_CASE("lambda2 zero logs a zero dark channel term") {
    TrainConfig cfg = tiny_config();
    cfg.lambda2 = 0;
    TrainingState s = init_training(cfg);
    const auto [blurry, sharp] = sample_pair(6);
    for (int i = 0; i < 2; ++i) CHECK(train_step(s, blurry, sharp, cfg).g_darkchannel == 0);
  }

  TEST_CASE("invalid config lists every violation") {
    TrainConfig cfg = tiny_config();
    cfg.crop = 15;
    cfg.lambda1 = -1;
    cfg.g_steps = 0;
    try {
      init_training(cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string m = e.what();
      CHECK(m.find("crop") != std::string::npos);
      CHECK(m.find("lambda1") != std::string::npos);
      CHECK(m.find("g_steps") != std::string::npos);
    }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load, save is byte-identical and restores everything") {
    TempDir dir("ckpt");
    const TrainConfig cfg = tiny_config();
    TrainingState s = init_training(cfg);
    const auto [blurry, sharp] = sample_pair(7);
    train_step(s, blurry, sharp, cfg);
    train_step(s, blurry, sharp, cfg);
    s.epoch = 3;
    s.batch_in_epoch = 5;
    save_checkpoint(dir.path / "a.dgc", s, cfg);
    CHECK(read_checkpoint_config(dir.path / "a.dgc") == cfg);
    TrainingState back = load_checkpoint(dir.path / "a.dgc", cfg);
    save_checkpoint(dir.path / "b.dgc", back, cfg);
    CHECK(file_bytes(dir.path / "a.dgc") == file_bytes(dir.path / "b.dgc"));
    CHECK(back.iteration == 2);
    CHECK(back.epoch == 3);
    CHECK(back.batch_in_epoch == 5);
    CHECK(snapshot(back.generator) == snapshot(s.generator));
    for (std::size_t i = 0; i < s.generator.parameters().size(); ++i) {
      const Parameter& p = s.generator.parameters()[i];
      const Parameter& q = back.generator.parameters()[i];
      CHECK(p.first_moment == q.first_moment);
      CHECK(p.second_moment == q.second_moment);
      CHECK(p.step_count == q.step_count);
    }
    for (std::size_t i = 0; i < s.discriminator.running_stats().size(); ++i)
      CHECK(s.discriminator.running_stats()[i].stats.var == back.discriminator.running_stats()[i].stats.var);
  }

  TEST_CASE("truncation, corruption, bad magic and version") {
    TempDir dir("ckpt_err");
    const TrainConfig cfg = tiny_config();
    const TrainingState s = init_training(cfg);
    const fs::path good = dir.path / "good.dgc";
    save_checkpoint(good, s, cfg);
    auto bytes = file_bytes(good);
    auto write = [&](const std::string& name, const std::vector<std::uint8_t>& b) {
      std::ofstream(dir.path / name, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                                             static_cast<std::streamsize>(b.size()));
      return dir.path / name;
    };
    for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t(13), std::size_t(9)})
      CHECK_THROWS_AS(load_checkpoint(write("t.dgc", {bytes.begin(), bytes.begin() + long(keep)}), cfg), CrcError);
    auto flipped = bytes;
    flipped[bytes.size() / 3] ^= 0x10;
    CHECK_THROWS_AS(load_checkpoint(write("f.dgc", flipped), cfg), CrcError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(load_checkpoint(write("m.dgc", magic), cfg), FormatError);
    auto version = bytes;
    version[4] = 2;
    CHECK_THROWS_AS(load_checkpoint(write("v.dgc", version), cfg), VersionError);
    CHECK_THROWS_AS(load_checkpoint(write("x.txt", {'h', 'e', 'l', 'l', 'o'}), cfg), FormatError);
  }

  TEST_CASE("a different spec fails naming the first mismatching tensor") {
    TempDir dir("ckpt_spec");
    const TrainConfig cfg = tiny_config();
    save_checkpoint(dir.path / "c.dgc", init_training(cfg), cfg);
    TrainConfig other = cfg;
    other.generator.encoder_filters = {4, 6};
    other.generator.decoder_filters = mirrored_decoder(other.generator.encoder_filters);
    try {
      load_checkpoint(dir.path / "c.dgc", other);
      FAIL("expected ShapeMismatchError");
    } catch (const ShapeMismatchError& e) {
      CHECK(std::string(e.what()).find("G.enc2.weight") != std::string::npos);
    }
    TrainConfig deeper = cfg;
    deeper.generator.encoder_filters = {4, 8, 8};
    deeper.generator.decoder_filters = mirrored_decoder(deeper.generator.encoder_filters);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "c.dgc", deeper), ShapeMismatchError);
  }
}

TEST_SUITE("train_loop") {
  TEST_CASE("two pairs, one epoch, batch one gives two reports and one checkpoint") {
    TempDir dir("loop");
    const auto data = write_dataset(dir.path / "data", 2);
    const std::string log = log_of(data, tiny_config(), dir.path / "out");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
    std::size_t ckpts = 0;
    for (const auto& e : fs::directory_iterator(dir.path / "out")) ckpts += e.path().extension() == ".dgc";
    CHECK(ckpts == 1);
    CHECK(fs::exists(dir.path / "out" / "final.dgc"));
  }

  TEST_CASE("tail batches are dropped") {
    TempDir dir("tail");
    const auto data = write_dataset(dir.path / "data", 3);
    TrainConfig cfg = tiny_config();
    cfg.batch = 2;
    cfg.epochs = 2;
    const std::string log = log_of(data, cfg, dir.path / "out");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  }

  TEST_CASE("logs are bit-identical across runs and resume matches the uninterrupted run") {
    TempDir dir("resume");
    const auto data = write_dataset(dir.path / "data", 3);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;
    const std::string full = log_of(data, cfg, dir.path / "a");
    CHECK(log_of(data, cfg, dir.path / "b") == full);

    LoopOptions first;
    first.max_iterations = 4;
    const std::string head = log_of(data, cfg, dir.path / "c", first);
    LoopOptions rest;
    rest.resume_from = dir.path / "c" / "final.dgc";
    const std::string tail = log_of(data, cfg, dir.path / "c", rest);
    CHECK(head + tail == full);
    CHECK(file_bytes(dir.path / "a" / "final.dgc") == file_bytes(dir.path / "c" / "final.dgc"));
  }

  TEST_CASE("a stop request flushes a checkpoint") {
    TempDir dir("stop");
    const auto data = write_dataset(dir.path / "data", 2);
    std::atomic<bool> stop{true};
    LoopOptions opt;
    opt.stop = &stop;
    std::ostringstream log;
    opt.log = &log;
    const LoopResult r = train_loop(data, tiny_config(), dir.path / "out", opt);
    CHECK(r.interrupted);
    CHECK(fs::exists(r.final_checkpoint));
    CHECK(r.steps <= 1);
  }

  TEST_CASE("unreadable samples are skipped with a warning") {
    TempDir dir("skip");
    auto data = write_dataset(dir.path / "data", 2);
    std::ofstream(dir.path / "data" / "sharp" / "broken.png") << "not an image";
    data = list_dataset(dir.path / "data");
    std::ostringstream log, warn;
    LoopOptions opt;
    opt.log = &log;
    opt.warnings = &warn;
    const LoopResult r = train_loop(data, tiny_config(), dir.path / "out", opt);
    CHECK(r.skipped_samples == 1);
    CHECK(r.steps == 2);
    CHECK(warn.str().find("broken.png") != std::string::npos);
  }
}
