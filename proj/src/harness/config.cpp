#include "otplug/harness/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "otplug/core/error.hpp"

namespace otplug {

namespace {

const std::set<std::string> kKeys{"experiment", "family", "estimator", "n_list", "m_rule", "reps", "seed",
                                  "threads",    "grid_m", "alpha",     "lambda", "level",  "out"};
const std::set<std::string> kExperiments{"rates", "coverage", "stability", "w2", "map", "ci"};

template <typename T>
T get(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::size_t get_count(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config key '") + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace

std::size_t ExperimentConfig::m_for(std::size_t n) const {
  if (m_rule == "n") return n;
  if (m_rule == "none") return 0;
  return static_cast<std::size_t>(std::stoull(m_rule));
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kKeys.count(k)) throw ConfigError("unknown config key '" + k + "'");
  ExperimentConfig c;
  for (const char* req : {"experiment", "family", "n_list"})
    if (!j.contains(req)) throw ConfigError(std::string("config key '") + req + "' is required");

  c.experiment = get<std::string>(j, "experiment");
  if (!kExperiments.count(c.experiment)) throw ConfigError("unknown experiment '" + c.experiment + "'");

  const auto& fam = j.at("family");
  if (fam.is_string()) {
    c.family.id = fam.get<std::string>();
  } else if (fam.is_object()) {
    for (const auto& [k, v] : fam.items())
      if (k != "id" && k != "dim" && k != "amplitude") throw ConfigError("unknown family key '" + k + "'");
    c.family.id = get<std::string>(fam, "id");
    if (fam.contains("dim")) c.family.dim = get_count(fam, "dim");
    if (fam.contains("amplitude")) c.family.amplitude = get<double>(fam, "amplitude");
  } else {
    throw ConfigError("config key 'family' must be a string or an object");
  }

  if (j.contains("estimator")) c.estimator = get<std::string>(j, "estimator");
  const auto& nl = j.at("n_list");
  if (!nl.is_array() || nl.empty()) throw ConfigError("n_list must be a nonempty array");
  for (const auto& v : nl) {
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError("n_list entries must be positive integers");
    c.n_list.push_back(v.get<std::size_t>());
  }
  for (std::size_t k = 1; k < c.n_list.size(); ++k)
    if (c.n_list[k] <= c.n_list[k - 1]) throw ConfigError("n_list must be strictly increasing");

  if (j.contains("m_rule")) {
    const auto& mr = j.at("m_rule");
    if (mr.is_number_integer()) {
      if (mr.get<long long>() < 1) throw ConfigError("m_rule must be positive");
      c.m_rule = std::to_string(mr.get<std::size_t>());
    } else {
      c.m_rule = get<std::string>(j, "m_rule");
      if (c.m_rule != "n" && c.m_rule != "none") throw ConfigError("m_rule must be \"n\", \"none\" or an integer");
    }
  }
  if (j.contains("reps")) c.reps = get_count(j, "reps");
  if (c.reps < 1) throw ConfigError("reps must be at least 1");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("threads")) c.threads = std::max<std::size_t>(1, get_count(j, "threads"));
  if (j.contains("grid_m")) c.grid_m = get_count(j, "grid_m");
  if (j.contains("alpha")) c.alpha = get<double>(j, "alpha");
  if (j.contains("lambda")) c.lambda = get<double>(j, "lambda");
  if (j.contains("level")) c.level = get<double>(j, "level");
  if (!(c.level >= 0.0 && c.level < 1.0)) throw ConfigError("level must lie in [0, 1)");
  if (j.contains("out")) c.out = get<std::string>(j, "out");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"experiment", experiment},
                   {"family", {{"id", family.id}, {"dim", family.dim}, {"amplitude", family.amplitude}}},
                   {"estimator", estimator},
                   {"n_list", n_list},
                   {"reps", reps},
                   {"seed", seed},
                   {"threads", threads},
                   {"grid_m", grid_m},
                   {"alpha", alpha},
                   {"lambda", lambda},
                   {"level", level},
                   {"out", out}};
  if (m_rule == "n" || m_rule == "none")
    j["m_rule"] = m_rule;
  else
    j["m_rule"] = std::stoull(m_rule);
  return j;
}

}  // namespace otplug
