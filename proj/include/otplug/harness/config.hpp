#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "otplug/core/ground_truth.hpp"

namespace otplug {

/// Experiment description read from a JSON file. Top-level keys are exactly
/// experiment, family, estimator, n_list, m_rule, reps, seed, threads,
/// grid_m, alpha, lambda, level, out; anything else is rejected.
///
/// `family` is an id string or {"id", "dim", "amplitude"}. `m_rule` is
/// "n" (m = n), "none" (one-sample) or a fixed positive integer.
/// Unset numeric options are NaN / 0 and fall back to per-experiment
/// defaults.
struct ExperimentConfig {
  std::string experiment = "rates";
  FamilySpec family;
  std::string estimator = "1nn";
  std::vector<std::size_t> n_list;
  std::string m_rule = "n";
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t grid_m = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  double level = 0.95;
  std::string out = ".";
  /// Fill runtime_ms (command line only; breaks byte-identical output).
  bool timing = false;

  bool one_sample() const { return m_rule == "none"; }
  /// Second sample size for a given n (0 when one-sample).
  std::size_t m_for(std::size_t n) const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace otplug
