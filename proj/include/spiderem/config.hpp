// Experiment specification: a flat key-value text file with optional
// per-strategy override sections ([strategy:NAME]). Hand-editable and
// diff-friendly; every invariant violation is reported before any work.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spiderem/solvers.hpp"

namespace spiderem {

struct StrategyOverride {
  std::optional<double> gamma;
  std::optional<double> gamma_reset;
  std::optional<double> alpha;
};

struct ExperimentSpec {
  // dataset: "synth" or a CSV path
  std::string dataset = "synth";
  bool csv_has_header = false;
  long synth_n = 5000;
  long synth_g = 5;
  long synth_d = 10;
  double synth_sep = 6.0;

  // model
  long model_g = 5;
  double cov_floor = 1e-8;

  // run grid
  std::vector<std::string> strategies;
  long replications = 1;
  long k_out = 1;
  long b = 1;
  double gamma = 0.01;
  double gamma_reset = 0.0;
  std::optional<double> alpha;
  long warmstart_epochs = 0;
  bool with_replacement = true;
  std::uint64_t seed = 0;
  long diag_every = 1;
  std::string termination = "none";  // none | randomized
  std::string out_dir = "out";
  int workers = 0;  // 0 = hardware concurrency

  std::map<std::string, StrategyOverride> overrides;

  bool strategy_known(const std::string& name) const {
    if (name == "online-em" || name == "batch-em") return true;
    const auto& grid = spider_strategy_names();
    return std::find(grid.begin(), grid.end(), name) != grid.end();
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> out;
    if (strategies.empty()) out.push_back("strategies: at least one strategy required");
    for (const auto& s : strategies)
      if (!strategy_known(s)) out.push_back("strategies: unknown strategy '" + s + "'");
    for (const auto& [name, ov] : overrides) {
      if (!strategy_known(name))
        out.push_back("override section for unknown strategy '" + name + "'");
      if (ov.gamma && !(*ov.gamma > 0.0))
        out.push_back("[" + name + "] gamma must be > 0");
      if (ov.gamma_reset && *ov.gamma_reset < 0.0)
        out.push_back("[" + name + "] gamma_reset must be >= 0");
      if (ov.alpha && !(*ov.alpha > 0.0))
        out.push_back("[" + name + "] alpha must be > 0");
    }
    if (replications < 1) out.push_back("replications must be >= 1");
    if (k_out < 1) out.push_back("k_out must be >= 1");
    if (b < 1) out.push_back("b must be >= 1");
    if (!(gamma > 0.0)) out.push_back("gamma must be > 0");
    if (gamma_reset < 0.0) out.push_back("gamma_reset must be >= 0");
    if (alpha && !(*alpha > 0.0)) out.push_back("alpha must be > 0");
    if (warmstart_epochs < 0) out.push_back("warmstart_epochs must be >= 0");
    if (diag_every < 1) out.push_back("diag_every must be >= 1");
    if (model_g < 1) out.push_back("model_g must be >= 1");
    if (!(cov_floor > 0.0)) out.push_back("cov_floor must be > 0");
    if (termination != "none" && termination != "randomized")
      out.push_back("termination must be 'none' or 'randomized'");
    if (workers < 0) out.push_back("workers must be >= 0");
    if (dataset == "synth") {
      if (synth_n < 1) out.push_back("synth_n must be >= 1");
      if (synth_g < 1) out.push_back("synth_g must be >= 1");
      if (synth_d < 1) out.push_back("synth_d must be >= 1");
      if (!(synth_sep > 0.0)) out.push_back("synth_sep must be > 0");
      if (!with_replacement && b > synth_n)
        out.push_back("b exceeds synth_n for sampling without replacement");
    } else if (!std::filesystem::exists(dataset)) {
      out.push_back("dataset file does not exist: " + dataset);
    }
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("invalid boolean for " + key + ": " + v);
}

inline long parse_long(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  const long out = std::stol(v, &pos);
  if (pos != v.size()) throw std::runtime_error("invalid integer for " + key + ": " + v);
  return out;
}

inline double parse_real(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("invalid number for " + key + ": " + v);
  return out;
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec file: " + path);
  ExperimentSpec spec;
  std::string line;
  std::string section;  // "" = global, otherwise strategy name
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed section");
      std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (name == "experiment") {
        section.clear();
      } else if (name.rfind("strategy:", 0) == 0) {
        section = detail::trim(name.substr(9));
      } else {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": unknown section [" + name + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!section.empty()) {
      auto& ov = spec.overrides[section];
      if (key == "gamma") ov.gamma = detail::parse_real(value, key);
      else if (key == "gamma_reset") ov.gamma_reset = detail::parse_real(value, key);
      else if (key == "alpha") ov.alpha = detail::parse_real(value, key);
      else
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": unknown strategy override key '" + key + "'");
      continue;
    }
    if (key == "dataset") spec.dataset = value;
    else if (key == "csv_has_header") spec.csv_has_header = detail::parse_bool(value, key);
    else if (key == "synth_n") spec.synth_n = detail::parse_long(value, key);
    else if (key == "synth_g") spec.synth_g = detail::parse_long(value, key);
    else if (key == "synth_d") spec.synth_d = detail::parse_long(value, key);
    else if (key == "synth_sep") spec.synth_sep = detail::parse_real(value, key);
    else if (key == "model_g") spec.model_g = detail::parse_long(value, key);
    else if (key == "cov_floor") spec.cov_floor = detail::parse_real(value, key);
    else if (key == "strategies") spec.strategies = detail::parse_list(value);
    else if (key == "replications") spec.replications = detail::parse_long(value, key);
    else if (key == "k_out") spec.k_out = detail::parse_long(value, key);
    else if (key == "b") spec.b = detail::parse_long(value, key);
    else if (key == "gamma") spec.gamma = detail::parse_real(value, key);
    else if (key == "gamma_reset") spec.gamma_reset = detail::parse_real(value, key);
    else if (key == "alpha") spec.alpha = detail::parse_real(value, key);
    else if (key == "warmstart_epochs") spec.warmstart_epochs = detail::parse_long(value, key);
    else if (key == "with_replacement") spec.with_replacement = detail::parse_bool(value, key);
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "diag_every") spec.diag_every = detail::parse_long(value, key);
    else if (key == "termination") spec.termination = value;
    else if (key == "out_dir") spec.out_dir = value;
    else if (key == "workers") spec.workers = static_cast<int>(detail::parse_long(value, key));
    else
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
  }
  return spec;
}

}  // namespace spiderem
