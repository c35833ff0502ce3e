#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deblur/training.hpp"

namespace deblur {

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in dump order.
const std::vector<ConfigKey>& config_keys();

/// Parses flat `key=value` text ('#' comments and blank lines allowed), then
/// applies `overrides` in order. When encoder_filters is given without
/// decoder_filters the decoder mirrors it; without d_encoder_filters the
/// discriminator shares the generator's encoder ladder.
/// Throws ConfigError listing every problem: unknown keys and malformed
/// values with their line numbers, then invariant violations.
TrainConfig parse_config(const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Text that parse_config maps back to an equal config.
std::string dump_config(const TrainConfig& config);

}  // namespace deblur
