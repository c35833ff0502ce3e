#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "deblur/blur.hpp"
#include "deblur/config.hpp"
#include "deblur/dataset.hpp"
#include "deblur/error.hpp"
#include "deblur/image_io.hpp"
#include "deblur/metrics.hpp"
#include "deblur/networks.hpp"
#include "deblur/training.hpp"
#include "deblur/verify.hpp"

namespace fs = std::filesystem;
using namespace deblur;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct DatasetGenArgs {
  std::string sharp_dir, out;
  int count = 0;
  double kernel_length = 15;
  double noise_variance = 0;
  std::uint64_t seed = 0;
};

int run_dataset_gen(const DatasetGenArgs& a) {
  std::vector<fs::path> sources;
  if (fs::is_directory(a.sharp_dir))
    for (const auto& e : fs::directory_iterator(a.sharp_dir))
      if (e.is_regular_file() && is_image_file(e.path())) sources.push_back(e.path());
  if (sources.empty()) throw DataError("no PNG/PPM images in " + a.sharp_dir);
  std::sort(sources.begin(), sources.end());
  if (a.count < 1) throw ConfigError("--count must be >= 1");

  fs::create_directories(fs::path(a.out) / "sharp");
  fs::create_directories(fs::path(a.out) / "blur");
  nlohmann::ordered_json manifest{{"seed", a.seed},
                                  {"kernel_length", a.kernel_length},
                                  {"noise_variance", a.noise_variance},
                                  {"pairs", nlohmann::ordered_json::array()}};
  for (int i = 0; i < a.count; ++i) {
    const fs::path& source = sources[static_cast<std::size_t>(i) % sources.size()];
    char name[32];
    std::snprintf(name, sizeof name, "%04d.png", i);
    const Tensor sharp = load_image(source);
    const std::uint64_t kernel_seed = derive_seed(a.seed, {1, static_cast<std::uint64_t>(i)});
    Rng kernel_rng(kernel_seed);
    const BlurKernel kernel = random_motion_kernel(a.kernel_length, kernel_rng);
    Tensor blurry = apply_blur(sharp, kernel);
    nlohmann::ordered_json entry{{"id", name},
                                 {"source", source.filename().string()},
                                 {"kernel_seed", kernel_seed},
                                 {"kernel", {{"height", kernel.height}, {"width", kernel.width}, {"taps", kernel.taps}}}};
    if (a.noise_variance > 0) {
      const std::uint64_t noise_seed = derive_seed(a.seed, {2, static_cast<std::uint64_t>(i)});
      Rng noise_rng(noise_seed);
      blurry = add_gaussian_noise(blurry, a.noise_variance, noise_rng);
      entry["noise_seed"] = noise_seed;
    }
    save_image(sharp, fs::path(a.out) / "sharp" / name);
    save_image(blurry, fs::path(a.out) / "blur" / name);
    manifest["pairs"].push_back(std::move(entry));
  }
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << a.count << " pairs to " << a.out << "\n";
  return kOk;
}

struct SynthArgs {
  std::string out;
  int count = 10;
  int size = 128;
  std::uint64_t seed = 0;
};

int run_synth_sharp(const SynthArgs& a) {
  if (a.count < 1 || a.size < 1) throw ConfigError("--count and --size must be >= 1");
  fs::create_directories(a.out);
  for (int i = 0; i < a.count; ++i) {
    Rng rng = make_rng(a.seed, {static_cast<std::uint64_t>(i)});
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04d.png", i);
    const auto n = static_cast<std::size_t>(a.size);
    save_image(synthetic_sharp_image(n, n, rng), fs::path(a.out) / name);
  }
  std::cout << "wrote " << a.count << " images to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, resume;
  std::uint64_t max_iterations = 0;
  bool dump_config = false;
  std::map<std::string, std::string> overrides;
};

TrainConfig resolve_config(const TrainArgs& a) {
  const std::string text = a.config.empty() ? std::string() : read_text(a.config);
  std::vector<std::pair<std::string, std::string>> overrides(a.overrides.begin(), a.overrides.end());
  return parse_config(text, overrides);
}

// Drops records at or past a resume point so the log reads as one uninterrupted run.
void truncate_log(const fs::path& path, std::uint64_t iteration) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_object() && j.contains("iteration") && j["iteration"].get<std::uint64_t>() < iteration) kept += line + "\n";
  }
  in.close();
  write_text(path, kept);
}

int run_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  if (a.dump_config) {
    std::cout << dump_config(config);
    return kOk;
  }
  if (a.data.empty() || a.out.empty()) throw ConfigError("--data and --out are required");
  const std::vector<DatasetEntry> dataset = list_dataset(a.data);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "config.txt", dump_config(config));
  const fs::path log_path = fs::path(a.out) / "train_log.jsonl";
  if (!a.resume.empty()) truncate_log(log_path, load_checkpoint(a.resume, config).iteration);
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  LoopOptions options;
  options.log = &log;
  options.warnings = &std::cerr;
  options.stop = &g_stop;
  options.resume_from = a.resume;
  options.max_iterations = a.max_iterations;
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  const LoopResult result = train_loop(dataset, config, a.out, options);
  std::cout << (result.interrupted ? "interrupted after " : "trained ") << result.steps << " steps";
  if (result.skipped_samples) std::cout << " (" << result.skipped_samples << " samples skipped)";
  std::cout << "; checkpoint " << result.final_checkpoint.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

Network load_generator(const fs::path& checkpoint) {
  const TrainConfig config = read_checkpoint_config(checkpoint);
  TrainingState state = load_checkpoint(checkpoint, config);
  return std::move(state.generator);
}

struct DeblurArgs {
  std::string checkpoint, in, out;
};

int run_deblur(const DeblurArgs& a) {
  Network g = load_generator(a.checkpoint);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(a.in)) {
    fs::create_directories(a.out);
    for (const auto& e : fs::directory_iterator(a.in))
      if (e.is_regular_file() && is_image_file(e.path()))
        jobs.emplace_back(e.path(), fs::path(a.out) / e.path().filename().replace_extension(".png"));
    std::sort(jobs.begin(), jobs.end());
    if (jobs.empty()) throw DataError("no PNG/PPM images in " + a.in);
  } else {
    jobs.emplace_back(a.in, a.out);
  }
  std::size_t failures = 0;
  for (const auto& [src, dst] : jobs) {
    try {
      save_image(deblur_image(g, load_image(src)), dst);
    } catch (const Error& e) {
      ++failures;
      std::cerr << "error: " << src.string() << ": " << e.what() << "\n";
    }
  }
  std::cout << "restored " << jobs.size() - failures << " of " << jobs.size() << " images\n";
  return failures == jobs.size() ? kData : kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints, labels;
  std::string data, report;
  double noise_variance = 0.001;
  int downsample_factor = 0;
  std::uint64_t seed = 0;
  bool baseline = false;
};

int run_eval(const EvalArgs& a) {
  if (a.checkpoints.empty() && !a.baseline) throw ConfigError("give at least one --checkpoint or --baseline");
  if (!a.labels.empty() && a.labels.size() != a.checkpoints.size())
    throw ConfigError("--label must be given once per --checkpoint");
  const std::vector<DatasetEntry> entries = list_dataset(a.data);

  std::vector<std::string> labels;
  std::vector<EvalReport> original, noisy;
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  auto score = [&](const std::string& label, const std::string& checkpoint, const Restorer& restore,
                   std::size_t factor) {
    EvalConfig cfg;
    cfg.downsample_factor = factor;
    cfg.seed = a.seed;
    EvalReport clean = evaluate(restore, entries, cfg);
    cfg.noise_variance = a.noise_variance;
    EvalReport noise = evaluate(restore, entries, cfg);
    for (EvalReport* r : {&clean, &noise}) {
      r->checkpoint = checkpoint;
      r->dataset = a.data;
    }
    models.push_back({{"label", label},
                      {"checkpoint", checkpoint},
                      {"original", nlohmann::ordered_json::parse(report_to_json(clean))},
                      {"noisy", nlohmann::ordered_json::parse(report_to_json(noise))}});
    labels.push_back(label);
    original.push_back(std::move(clean));
    noisy.push_back(std::move(noise));
  };

  if (a.baseline) {
    const std::size_t factor = a.downsample_factor ? static_cast<std::size_t>(a.downsample_factor) : 2;
    score("blurry", "", [](const Tensor& x) { return x; }, factor);
  }
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    const TrainConfig config = read_checkpoint_config(a.checkpoints[i]);
    TrainingState state = load_checkpoint(a.checkpoints[i], config);
    Network g = std::move(state.generator);
    const std::size_t factor = static_cast<std::size_t>(a.downsample_factor ? a.downsample_factor : config.downsample_factor);
    const std::string label = a.labels.empty() ? fs::path(a.checkpoints[i]).stem().string() : a.labels[i];
    score(label, a.checkpoints[i], [&](const Tensor& x) { return deblur_image(g, x); }, factor);
  }

  const std::string table = render_table(labels, original, noisy);
  std::cout << table;
  if (!a.report.empty()) {
    nlohmann::ordered_json j{{"dataset", a.data}, {"noise_variance", a.noise_variance}, {"seed", a.seed},
                             {"models", models}, {"table", table}};
    write_text(a.report, j.dump(2) + "\n");
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string scope = "op";
  std::uint64_t seed = 0;
  int seeds = 0;
  double tolerance = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  const std::map<std::string, GradcheckScope> scopes{
      {"op", GradcheckScope::Op}, {"network", GradcheckScope::Network}, {"loss", GradcheckScope::Loss}};
  const GradcheckScope scope = scopes.at(a.scope);
  const int count = a.seeds > 0 ? a.seeds : scope == GradcheckScope::Op ? 10 : 3;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(a.seed + static_cast<std::uint64_t>(i));
  auto outcomes = run_gradcheck_suite(scope, seeds);
  if (a.tolerance > 0)
    for (CheckOutcome& o : outcomes) {
      o.tolerance = a.tolerance;
      o.pass = o.result.max_rel_error <= a.tolerance;
    }
  std::cout << format_outcomes(outcomes);
  int failed = 0;
  for (const CheckOutcome& o : outcomes)
    if (!o.pass) {
      ++failed;
      std::cerr << "FAIL " << o.name << " seed " << o.seed << ": rel. error " << o.result.max_rel_error
                << " > " << o.tolerance << " at input " << o.result.worst_input << " element "
                << o.result.worst_element << "\n";
    }
  std::cout << outcomes.size() - static_cast<std::size_t>(failed) << "/" << outcomes.size() << " checks passed\n";
  return failed ? kNumerical : kOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const StateError*>(&e)) return kUsage;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  return kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind motion deblurring with a conditional GAN and a dark channel prior"};
  app.require_subcommand(1);

  DatasetGenArgs gen;
  auto* gen_cmd = app.add_subcommand("dataset-gen", "Synthesize blurry/sharp pairs from sharp images");
  gen_cmd->add_option("--sharp-dir", gen.sharp_dir, "directory of sharp PNG/PPM images")->required();
  gen_cmd->add_option("--out", gen.out, "output root (gets blur/, sharp/, manifest.json)")->required();
  gen_cmd->add_option("--count", gen.count, "number of pairs")->required();
  gen_cmd->add_option("--kernel-length", gen.kernel_length, "motion kernel arc length in px")->capture_default_str();
  gen_cmd->add_option("--noise-variance", gen.noise_variance, "Gaussian noise variance on blurry images")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-sharp", "Write procedural sharp test images");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--count", synth.count, "number of images")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "square image size in px")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "random seed")->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train generator and discriminator");
  train_cmd->add_option("--config", train.config, "key=value config file");
  train_cmd->add_option("--data", train.data, "dataset root with sharp/ and optional blur/");
  train_cmd->add_option("--out", train.out, "output directory for checkpoints and train_log.jsonl");
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");
  train_cmd->add_option("--max-iterations", train.max_iterations, "stop after this many iterations in total");
  train_cmd->add_flag("--dump-config", train.dump_config, "print the resolved config and exit");
  for (const ConfigKey& key : config_keys())
    train_cmd->add_option_function<std::string>(
        "--" + key.name, [&train, name = key.name](const std::string& v) { train.overrides[name] = v; },
        key.help + " (config key)");

  DeblurArgs deblur;
  auto* deblur_cmd = app.add_subcommand("deblur", "Restore an image or a directory of images");
  deblur_cmd->add_option("--checkpoint", deblur.checkpoint, "trained checkpoint")->required();
  deblur_cmd->add_option("--in", deblur.in, "input image or directory")->required();
  deblur_cmd->add_option("--out", deblur.out, "output image or directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score checkpoints with PSNR/SSIM on clean and noisy inputs");
  eval_cmd->add_option("--checkpoint", eval.checkpoints, "checkpoint to evaluate (repeatable)");
  eval_cmd->add_option("--label", eval.labels, "column label per checkpoint (repeatable)");
  eval_cmd->add_option("--data", eval.data, "dataset root")->required();
  eval_cmd->add_option("--noise-variance", eval.noise_variance, "noise variance for the noisy rows")
      ->capture_default_str();
  eval_cmd->add_option("--downsample", eval.downsample_factor, "override the checkpoint's downsample factor");
  eval_cmd->add_option("--seed", eval.seed, "seed for synthesized blur and noise")->capture_default_str();
  eval_cmd->add_option("--report", eval.report, "JSON report path");
  eval_cmd->add_flag("--baseline", eval.baseline, "add a column scoring the unrestored blurry input");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  grad_cmd->add_option("--scope", grad.scope, "op, network or loss")
      ->check(CLI::IsMember({"op", "network", "loss"}))
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "first seed")->capture_default_str();
  grad_cmd->add_option("--seeds", grad.seeds, "number of consecutive seeds (default 10 for op, 3 otherwise)");
  grad_cmd->add_option("--tolerance", grad.tolerance, "replace every per-case tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return run_dataset_gen(gen);
    if (*synth_cmd) return run_synth_sharp(synth);
    if (*train_cmd) return run_train(train);
    if (*deblur_cmd) return run_deblur(deblur);
    if (*eval_cmd) return run_eval(eval);
    if (*grad_cmd) return run_gradcheck(grad);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
