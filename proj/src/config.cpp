#include "robagg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "robagg/error.hpp"

namespace robagg {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(const std::string& where, std::string_view key, const std::string& what) {
  throw ConfigError(where + ": key '" + std::string(key) + "': " + what);
}

template <typename T>
T parse_number(std::string_view value, const std::string& where, std::string_view key) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size())
    fail(where, key, "expected a number, got '" + std::string(value) + "'");
  return v;
}

double parse_real(std::string_view value, const std::string& where, std::string_view key) {
  if (value == "inf" || value == "infinity") return kHuberInfinity;
  const double v = parse_number<double>(value, where, key);
  if (!std::isfinite(v)) fail(where, key, "value must be finite");
  return v;
}

bool parse_bool(std::string_view value, const std::string& where, std::string_view key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(where, key, "expected true or false, got '" + std::string(value) + "'");
}

void apply(RunConfig& cfg, std::string_view key, std::string_view value, const std::string& where) {
  StudyConfig& s = cfg.study;
  try {
    if (key == "model") {
      s.model = parse_model_kind(value);
    } else if (key == "theta0") {
      std::vector<double> xs;
      std::string_view rest = value;
      for (;;) {
        const std::size_t comma = rest.find(',');
        xs.push_back(parse_real(trim(rest.substr(0, comma)), where, key));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      s.theta0 = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    } else if (key == "K") {
      s.servers = parse_number<int>(value, where, key);
      if (s.servers < 1) fail(where, key, "K must be >= 1");
    } else if (key == "n") {
      s.shard_size = parse_number<std::int64_t>(value, where, key);
      if (s.shard_size < 1) fail(where, key, "n must be >= 1");
    } else if (key == "c") {
      s.c = parse_real(value, where, key);
      if (!(s.c > 0.0)) fail(where, key, "c must be positive");
    } else if (key == "alpha") {
      s.alpha = parse_real(value, where, key);
      if (!(s.alpha > 0.0 && s.alpha < 1.0)) fail(where, key, "alpha must lie in (0, 1)");
    } else if (key == "replicates") {
      s.replicates = parse_number<int>(value, where, key);
      if (s.replicates < 1) fail(where, key, "replicates must be >= 1");
    } else if (key == "seed") {
      s.base_seed = parse_number<std::uint64_t>(value, where, key);
    } else if (key == "contamination") {
      s.contamination.kind = parse_contamination_kind(value);
    } else if (key == "count") {
      const int count = parse_number<int>(value, where, key);
      if (count < 0) fail(where, key, "count must be >= 0");
      s.contamination.count = count;
    } else if (key == "omniscient_value") {
      s.contamination.omniscient_value = parse_real(value, where, key);
    } else if (key == "gaussian_variance") {
      s.contamination.gaussian_variance = parse_real(value, where, key);
      if (!(s.contamination.gaussian_variance > 0.0)) fail(where, key, "variance must be positive");
    } else if (key == "randomize_placement") {
      s.contamination.randomize_placement = parse_bool(value, where, key);
    } else if (key == "threads") {
      cfg.threads = parse_number<int>(value, where, key);
      if (cfg.threads < 0) fail(where, key, "threads must be >= 0");
    } else {
      fail(where, key, "unknown key");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(where, key, e.what());
  }
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = {
      "model", "theta0", "K", "n", "c", "alpha", "replicates", "seed", "contamination", "count",
      "omniscient_value", "gaussian_variance", "randomize_placement", "threads"};
  return keys;
}

RunConfig parse_config(std::string_view text, const Overrides& overrides) {
  RunConfig cfg;
  std::vector<std::string> seen;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);

    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected key = value, got '" + std::string(line) + "'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) fail(where, key, "duplicate key");
    seen.emplace_back(key);
    apply(cfg, key, value, where);
  }
  for (const auto& [key, value] : overrides) apply(cfg, key, trim(value), "override");

  const StudyConfig& s = cfg.study;
  if (s.contamination.count && *s.contamination.count > s.servers)
    throw ConfigError("key 'count': contamination count " + std::to_string(*s.contamination.count) +
                      " exceeds K=" + std::to_string(s.servers));
  s.validate();
  return cfg;
}

RunConfig load_config(const std::string& path, const Overrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace robagg
