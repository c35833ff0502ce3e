#include "deblur/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "deblur/error.hpp"

namespace deblur {

namespace {

struct BadValue {
  std::string reason;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw BadValue{"'" + v + "' is not a valid number"};
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw BadValue{"'" + v + "' is not true/false"};
}

std::vector<int> parse_list(const std::string& v) {
  std::vector<int> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item)));
  return out;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct KeyHandler {
  ConfigKey key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
KeyHandler number_key(std::string name, std::string help, T TrainConfig::*field) {
  return {{std::move(name), std::move(help)},
          [field](TrainConfig& c, const std::string& v) { c.*field = parse_number<T>(v); },
          [field](const TrainConfig& c) { return format_number(c.*field); }};
}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = [] {
    std::vector<KeyHandler> t;
    t.push_back({{"encoder_filters", "generator encoder output channels per block"},
                 [](TrainConfig& c, const std::string& v) { c.generator.encoder_filters = parse_list(v); },
                 [](const TrainConfig& c) { return format_list(c.generator.encoder_filters); }});
    t.push_back({{"decoder_filters", "generator decoder output channels per block, last must be 3"},
                 [](TrainConfig& c, const std::string& v) { c.generator.decoder_filters = parse_list(v); },
                 [](const TrainConfig& c) { return format_list(c.generator.decoder_filters); }});
    t.push_back({{"d_encoder_filters", "discriminator conv output channels per block"},
                 [](TrainConfig& c, const std::string& v) { c.discriminator.encoder_filters = parse_list(v); },
                 [](const TrainConfig& c) { return format_list(c.discriminator.encoder_filters); }});
    t.push_back({{"kernel", "conv kernel size (odd), both networks"},
                 [](TrainConfig& c, const std::string& v) {
                   c.generator.kernel = c.discriminator.kernel = parse_number<int>(v);
                 },
                 [](const TrainConfig& c) { return std::to_string(c.generator.kernel); }});
    t.push_back({{"stride", "conv stride, both networks"},
                 [](TrainConfig& c, const std::string& v) {
                   c.generator.stride = c.discriminator.stride = parse_number<int>(v);
                 },
                 [](const TrainConfig& c) { return std::to_string(c.generator.stride); }});
    t.push_back({{"leak", "LeakyReLU slope for negative inputs, both networks"},
                 [](TrainConfig& c, const std::string& v) {
                   c.generator.leak = c.discriminator.leak = parse_number<double>(v);
                 },
                 [](const TrainConfig& c) { return format_number(c.generator.leak); }});
    t.push_back({{"dropout_rate", "generator decoder dropout probability"},
                 [](TrainConfig& c, const std::string& v) { c.generator.dropout_rate = parse_number<double>(v); },
                 [](const TrainConfig& c) { return format_number(c.generator.dropout_rate); }});
    t.push_back({{"dropout_blocks", "generator decoder blocks (0-based) that apply dropout"},
                 [](TrainConfig& c, const std::string& v) { c.generator.dropout_blocks = parse_list(v); },
                 [](const TrainConfig& c) { return format_list(c.generator.dropout_blocks); }});
    t.push_back({{"normalize_first_layer", "batch-normalize the first conv block of both networks"},
                 [](TrainConfig& c, const std::string& v) {
                   c.generator.normalize_first_layer = c.discriminator.normalize_first_layer = parse_bool(v);
                 },
                 [](const TrainConfig& c) { return std::string(c.generator.normalize_first_layer ? "true" : "false"); }});
    t.push_back(number_key("lambda1", "weight of the L1 content loss", &TrainConfig::lambda1));
    t.push_back(number_key("lambda2", "weight of the dark channel loss", &TrainConfig::lambda2));
    t.push_back(number_key("dc_window", "dark channel window (odd)", &TrainConfig::dc_window));
    t.push_back({{"lr", "Adam learning rate"},
                 [](TrainConfig& c, const std::string& v) { c.adam.lr = static_cast<Real>(parse_number<double>(v)); },
                 [](const TrainConfig& c) { return format_number(c.adam.lr); }});
    t.push_back({{"beta1", "Adam first-moment decay"},
                 [](TrainConfig& c, const std::string& v) { c.adam.beta1 = static_cast<Real>(parse_number<double>(v)); },
                 [](const TrainConfig& c) { return format_number(c.adam.beta1); }});
    t.push_back({{"beta2", "Adam second-moment decay"},
                 [](TrainConfig& c, const std::string& v) { c.adam.beta2 = static_cast<Real>(parse_number<double>(v)); },
                 [](const TrainConfig& c) { return format_number(c.adam.beta2); }});
    t.push_back({{"eps", "Adam denominator epsilon"},
                 [](TrainConfig& c, const std::string& v) { c.adam.eps = static_cast<Real>(parse_number<double>(v)); },
                 [](const TrainConfig& c) { return format_number(c.adam.eps); }});
    t.push_back(number_key("d_steps", "discriminator updates per iteration", &TrainConfig::d_steps));
    t.push_back(number_key("g_steps", "generator updates per iteration", &TrainConfig::g_steps));
    t.push_back(number_key("crop", "training crop size after downsampling", &TrainConfig::crop));
    t.push_back(number_key("downsample_factor", "power-of-two downsampling before cropping",
                           &TrainConfig::downsample_factor));
    t.push_back(number_key("noise_variance", "Gaussian noise variance added to blurry crops",
                           &TrainConfig::noise_variance));
    t.push_back(number_key("kernel_length", "motion kernel length for sharp-only datasets",
                           &TrainConfig::kernel_length));
    t.push_back(number_key("epochs", "training epochs", &TrainConfig::epochs));
    t.push_back(number_key("batch", "batch size", &TrainConfig::batch));
    t.push_back(number_key("seed", "seed for init, shuffling, augmentation and dropout", &TrainConfig::seed));
    t.push_back(number_key("checkpoint_every", "iterations between checkpoints (0: final only)",
                           &TrainConfig::checkpoint_every));
    t.push_back({{"log_timing", "record wall_ms in the step log"},
                 [](TrainConfig& c, const std::string& v) { c.log_timing = parse_bool(v); },
                 [](const TrainConfig& c) { return std::string(c.log_timing ? "true" : "false"); }});
    return t;
  }();
  return table;
}

const KeyHandler* find_handler(const std::string& name) {
  for (const KeyHandler& h : handlers())
    if (h.key.name == name) return &h;
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const KeyHandler& h : handlers()) k.push_back(h.key);
    return k;
  }();
  return keys;
}

TrainConfig parse_config(const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig config;
  std::vector<std::string> problems;
  std::map<std::string, bool> seen;

  auto apply = [&](const std::string& where, const std::string& key, const std::string& value) {
    const KeyHandler* h = find_handler(key);
    if (!h) {
      problems.push_back(where + ": unknown key '" + key + "'");
      return;
    }
    try {
      h->set(config, value);
      seen[key] = true;
    } catch (const BadValue& e) {
      problems.push_back(where + ": " + key + ": " + e.reason);
    }
  };

  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(number);
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected key=value, got '" + body + "'");
      continue;
    }
    apply(where, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  for (const auto& [key, value] : overrides) apply("--" + key, key, value);

  if (seen.contains("encoder_filters") && !seen.contains("decoder_filters"))
    config.generator.decoder_filters = mirrored_decoder(config.generator.encoder_filters);
  if (seen.contains("encoder_filters") && !seen.contains("dropout_blocks")) {
    config.generator.dropout_blocks.clear();
    for (int b = 0; b < static_cast<int>(config.generator.depth() / 2); ++b) config.generator.dropout_blocks.push_back(b);
  }
  if (!seen.contains("d_encoder_filters")) config.discriminator.encoder_filters = config.generator.encoder_filters;

  for (std::string& v : config.violations()) problems.push_back(std::move(v));
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return config;
}

std::string dump_config(const TrainConfig& config) {
  std::string out;
  for (const KeyHandler& h : handlers()) out += h.key.name + "=" + h.get(config) + "\n";
  return out;
}

}  // namespace deblur
