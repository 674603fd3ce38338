#pragma once

// Flat key=value configuration shared by the CLI subcommands.
//
//   # comment
//   model = logistic
//   K = 20
//   theta0 = 2, 1
//
// Keys are case-sensitive; unknown keys are rejected. Overrides (from the
// command line) are applied after the file and win over it.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robagg/distsim.hpp"

namespace robagg {

struct RunConfig {
  StudyConfig study;
  int threads = 0;  // 0: ROBAGG_THREADS or hardware concurrency
};

/// (key, value) pairs; the key names the source in error messages.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses configuration text and applies overrides. Errors are ConfigError
/// naming the key and the line (or "override" for command-line values).
RunConfig parse_config(std::string_view text, const Overrides& overrides = {});

/// Reads `path` and forwards to parse_config.
RunConfig load_config(const std::string& path, const Overrides& overrides = {});

/// Keys accepted by parse_config, in documentation order.
const std::vector<std::string_view>& config_keys();

}  // namespace robagg
