#include "otplug/harness/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "otplug/core/error.hpp"
#include "otplug/harness/experiments.hpp"
#include "otplug/inference/inference.hpp"
#include "otplug/map/map_estimate.hpp"

namespace otplug {

namespace {

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      return false;
    }
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) ++used;
    if (used != field.size()) return false;
    out.push_back(v);
  }
  return !out.empty();
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << body;
}

Domain parse_domain(const std::string& s) {
  if (s == "cube") return Domain::cube;
  if (s == "torus") return Domain::torus;
  throw ConfigError("domain must be cube or torus");
}

struct Inputs {
  std::string config;
  std::string x, y;
  std::string domain = "cube";
  std::string plugin = "empirical";
  std::string estimator = "1nn";
  std::string out;
  double alpha = 0.0;
  double lambda = 0.0;
  double level = 0.95;
  std::size_t grid_m = 0;
  std::size_t threads = 0;
  bool timing = false;
};

// Samples for w2 / map / ci: from files, or drawn from the configured
// family at the first n of n_list.
std::pair<WeightedCloud, WeightedCloud> load_samples(Inputs& in) {
  if (!in.config.empty()) {
    const ExperimentConfig c = ExperimentConfig::load(in.config);
    const GroundTruth gt = GroundTruth::make(c.family);
    const std::size_t n = c.n_list.front();
    const std::uint64_t seed = derive_seed(c.seed, n, 0);
    Rng rx(seed, 1), ry(seed, 2);
    if (in.alpha == 0.0) in.alpha = c.alpha;
    if (in.lambda == 0.0) in.lambda = c.lambda > 0.0 ? c.lambda : gt.lambda();
    if (in.grid_m == 0) in.grid_m = c.grid_m;
    const std::size_t m = c.m_for(n) ? c.m_for(n) : n;
    return {gt.sample(Which::source, n, rx), gt.sample(Which::target, m, ry)};
  }
  if (in.x.empty() || in.y.empty()) throw ConfigError("need --x and --y, or --config");
  const Domain d = parse_domain(in.domain);
  return {read_cloud_csv(in.x, d), read_cloud_csv(in.y, d)};
}

void emit(const Inputs& in, const nlohmann::json& j, std::ostream& out) {
  if (in.out.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_file(in.out, j.dump(2) + "\n");
  }
}

int run_experiment(const std::string& kind, Inputs& in, std::ostream& out) {
  ExperimentConfig c = ExperimentConfig::load(in.config);
  if (c.experiment != kind) throw ConfigError("config describes a '" + c.experiment + "' experiment, not '" + kind + "'");
  if (!in.out.empty()) c.out = in.out;
  if (in.threads) c.threads = in.threads;
  c.timing = in.timing;
  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  nlohmann::json summary;
  if (kind == "rates") {
    const RateResult r = run_rates(c);
    write_file(dir / "rates.csv", rates_csv(r));
    write_file(dir / "rates_summary.csv", rates_summary_csv(r));
    summary = slopes_json(r);
    write_file(dir / "slopes.json", summary.dump(2) + "\n");
  } else if (kind == "coverage") {
    const CoverageResult r = run_coverage(c);
    write_file(dir / "coverage.csv", coverage_csv(r));
    summary = coverage_json(r);
    write_file(dir / "coverage.json", summary.dump(2) + "\n");
  } else {
    const StabilityResult r = run_stability(c);
    write_file(dir / "stability.csv", stability_csv(r));
    summary = stability_json(r);
    write_file(dir / "stability.json", summary.dump(2) + "\n");
  }
  out << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

WeightedCloud read_cloud_csv(const std::string& path, Domain domain) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  std::vector<double> row, coords;
  std::size_t dim = 0, rows = 0, lineno = 0;
  bool header_allowed = true;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    if (!parse_row(line, row)) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw ConfigError(path + ":" + std::to_string(lineno) + ": not a numeric row");
    }
    header_allowed = false;
    if (dim == 0) dim = row.size();
    if (row.size() != dim) throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row");
    coords.insert(coords.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ConfigError("'" + path + "' holds no points");
  try {
    return WeightedCloud::uniform(dim, domain, std::move(coords));
  } catch (const InvalidArgument& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Plugin estimators of optimal transport maps and Wasserstein distances", "otplug_cli"};
  app.require_subcommand(1);
  Inputs in;

  auto sample_opts = [&in](CLI::App* sub) {
    sub->add_option("--config", in.config, "JSON experiment config (draws the samples)");
    sub->add_option("--x", in.x, "CSV of source points");
    sub->add_option("--y", in.y, "CSV of target points");
    sub->add_option("--domain", in.domain, "cube or torus")->capture_default_str();
    sub->add_option("--alpha", in.alpha, "smoothness hint for haar/kernel");
    sub->add_option("--grid-m", in.grid_m, "grid resolution for density plugins");
    sub->add_option("--out", in.out, "output file (default stdout)");
  };
  auto* w2 = app.add_subcommand("w2", "plugin estimate of W2^2");
  sample_opts(w2);
  w2->add_option("--plugin", in.plugin, "empirical, haar or kernel")->capture_default_str();
  auto* ci = app.add_subcommand("ci", "confidence interval for W2^2");
  sample_opts(ci);
  ci->add_option("--plugin", in.plugin, "empirical, haar or kernel")->capture_default_str();
  ci->add_option("--level", in.level, "confidence level 1 - delta")->capture_default_str();
  auto* map = app.add_subcommand("map", "transport map estimate as JSON");
  sample_opts(map);
  map->add_option("--estimator", in.estimator, "1nn, convex-ls, haar or kernel")->capture_default_str();
  map->add_option("--lambda", in.lambda, "curvature bound for convex-ls");

  std::map<std::string, CLI::App*> experiments;
  for (const char* name : {"rates", "coverage", "stability"}) {
    auto* sub = app.add_subcommand(name, std::string("run a ") + name + " experiment");
    sub->add_option("--config", in.config, "JSON experiment config")->required();
    sub->add_option("--out", in.out, "output directory (overrides config)");
    sub->add_option("--threads", in.threads, "worker threads (overrides config)");
    sub->add_flag("--timing", in.timing, "fill the runtime_ms column");
    experiments[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    for (const auto& [name, sub] : experiments)
      if (sub->parsed()) return run_experiment(name, in, out);

    auto [x, y] = load_samples(in);
    if (w2->parsed()) {
      auto [pm, qm] = plugin_measures(in.plugin, x, y, in.alpha, in.grid_m);
      emit(in, plugin_solve(pm, qm).estimate.to_json(), out);
    } else if (ci->parsed()) {
      if (!(in.level >= 0.0 && in.level < 1.0)) throw ConfigError("--level must lie in [0, 1)");
      auto [pm, qm] = plugin_measures(in.plugin, x, y, in.alpha, in.grid_m);
      const PluginSolve solve = plugin_solve(pm, qm);
      const Potentials pot = extract_potentials(solve);
      const VarianceEstimates var = variance_estimates(pot.phi, solve.source.weights(), pot.psi,
                                                       solve.target.weights(), pm.sample_size, qm.sample_size);
      emit(in, ci_to_json(confidence_interval(solve.estimate, var, 1.0 - in.level), solve.estimate, var), out);
    } else {
      if (in.estimator == "1nn" || in.estimator == "convex-ls") {
        const OtSolution sol = solve_discrete_ot(x, y, metric_for(x.domain()));
        if (in.estimator == "1nn") {
          emit(in, estimate_1nn(x, y, sol.coupling).to_json(), out);
        } else {
          if (!(in.lambda >= 1.0)) throw ConfigError("convex-ls needs --lambda >= 1");
          emit(in, estimate_convex_ls(x, y, sol.coupling, in.lambda).to_json(), out);
        }
      } else if (in.estimator == "haar" || in.estimator == "kernel") {
        auto [p, q] = density_estimates(in.estimator, x, y, in.alpha, in.grid_m);
        emit(in, estimate_density_plugin(p, q).to_json(), out);
      } else {
        throw ConfigError("unknown map estimator '" + in.estimator + "'");
      }
    }
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace otplug
