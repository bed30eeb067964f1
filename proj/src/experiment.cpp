#include "amlmc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "amlmc/csv.hpp"
#include "amlmc/parallel.hpp"
#include "amlmc/svg_plot.hpp"

namespace amlmc {

namespace {

constexpr std::uint64_t kRepTag = 0x52455053u;    // "REPS"
constexpr std::uint64_t kTruthTag = 0x54525448u;  // "TRTH"

bool is_amm(const std::string& method) { return method == "ammlmc" || method == "ammlpf"; }
bool is_single(const std::string& method) { return method == "stdmc" || method == "pf"; }

const std::vector<int>& grid_of(const ExperimentConfig& config, const std::string& method) {
  return is_amm(method) ? config.amm_grid : config.grid;
}

/// Std MC / PF and the AMM variants resolve the step linearly in epsilon
/// (weak order 1 budgeting); the Weak-2 multilevel methods use
/// L = ceil(log2(1/eps) / 2), so eps = 4^-L reproduces the grid value.
double grid_epsilon(const std::string& method, int grid) {
  return is_single(method) || is_amm(method) ? std::ldexp(1.0, -grid) : std::ldexp(1.0, -2 * grid);
}

double unit_interval(const ExperimentConfig& config, const BundledModel& bundle) {
  return config.problem == Problem::Forward ? bundle.horizon : bundle.obs_interval;
}

/// M_l = c eps^-2 Delta_l^{3/2} (forward) or c eps^-2 Delta_l L (filtering) at a fixed L.
LevelPlan amm_plan(double epsilon, double c, int L, Problem problem, double unit, int base_level) {
  LevelPlan plan;
  plan.L = L;
  plan.base_level = base_level;
  plan.epsilon = epsilon;
  plan.horizon = unit;
  plan.rule = AllocationRule::Manual;
  const double scale = c / (epsilon * epsilon);
  for (int i = 0; i <= L; ++i) {
    const double d = plan.delta(i);
    const double raw = problem == Problem::Forward ? scale * std::pow(d, 1.5) : scale * d * L;
    plan.M.push_back(std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::ceil(raw * (1 - 1e-12)))));
  }
  plan.validate();
  return plan;
}

struct RunOutcome {
  double value = 0.0;  // forward estimate or final-step filter estimate
  double step_cost = 0.0;
  double wall = 0.0;
};

std::string truth_hint(const ExperimentConfig& config) {
  return "ground truth not found at " + config.truth_path() + "; run `amlmc_cli truth` with the same config first";
}

}  // namespace

int reference_level(const ExperimentConfig& config) {
  const int top = *std::max_element(config.grid.begin(), config.grid.end());
  const int level = config.base_level + top + config.truth.level_offset;
  check_level(level);
  return level;
}

LevelPlan plan_for(const ExperimentConfig& config, const std::string& method, int grid) {
  const auto bundle = make_model(config.model, config.params);
  const double unit = unit_interval(config, bundle);
  const double eps = grid_epsilon(method, grid);
  const double c = config.constant(method);
  if (is_single(method)) {
    LevelPlan plan;
    plan.base_level = config.base_level + grid;
    plan.L = 0;
    plan.epsilon = eps;
    plan.horizon = unit;
    plan.M = {std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::ceil(c / (eps * eps) * (1 - 1e-12))))};
    plan.validate();
    return plan;
  }
  if (is_amm(method)) return amm_plan(eps, c, grid, config.problem, unit, config.base_level);
  if (method == "amlmc") return allocate_amlmc(eps, c, unit, config.base_level);
  if (method == "mlmc" || method == "mlpf") return allocate_mlpf(eps, c, MlpfVariant::Mlpf, unit, config.base_level);
  if (method == "amlpf") return allocate_mlpf(eps, c, MlpfVariant::Amlpf, unit, config.base_level);
  throw ConfigError("unknown method '" + method + "'");
}

SyntheticData<double> experiment_data(const ExperimentConfig& config) {
  const auto bundle = make_model(config.model, config.params);
  return generate_synthetic<double>(*bundle.model, bundle.x0, bundle.obs_interval, config.steps, bundle.observed,
                                    bundle.obs_sd, config.data_level, config.seed);
}

StateSpaceModel<double> experiment_state_space(const ExperimentConfig&, const BundledModel& bundle,
                                               const std::vector<Observation>& observations) {
  StateSpaceModel<double> ssm;
  ssm.dynamics = bundle.model;
  ssm.x0 = bundle.x0;
  ssm.obs_interval = bundle.obs_interval;
  ssm.log_density = gaussian_observation<double>(bundle.observed, bundle.obs_sd);
  ssm.observations = observations;
  return ssm;
}

std::uint64_t truth_seed(const ExperimentConfig& config) { return derive_seed(config.seed, kTruthTag); }

GroundTruth make_ground_truth(const ExperimentConfig& config) {
  config.validate();
  const auto bundle = make_model(config.model, config.params);
  const auto phi = coordinate<double>(bundle.observed);
  GroundTruth truth;
  truth.model = config.model;
  truth.problem = config.problem;
  truth.seed = truth_seed(config);
  truth.level = reference_level(config);
  truth.samples = config.truth.samples;
  if (config.problem == Problem::Forward) {
    const auto report = run_single_level<double>(*bundle.model, phi, bundle.x0, bundle.horizon, truth.level,
                                                 truth.samples, truth.seed, SchemeKind::Weak2, {config.threads});
    const auto& lv = report.levels.front();
    truth.value = {report.estimate};
    truth.std_error = {std::sqrt(lv.variance / static_cast<double>(lv.samples))};
  } else {
    const auto data = experiment_data(config);
    const auto ssm = experiment_state_space(config, bundle, data.observations);
    const auto report = run_pf_report<double>(ssm, truth.level, truth.samples, phi, truth.seed,
                                              FilterOptions{ResamplePolicy::AdaptiveEss, config.threads});
    truth.value = report.estimate;
    truth.std_error.assign(truth.value.size(), std::numeric_limits<double>::quiet_NaN());
  }
  return truth;
}

void write_ground_truth(const std::string& path, const GroundTruth& truth) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write ground truth to " + path);
  out << "# model=" << truth.model << "\n";
  out << "# problem=" << to_string(truth.problem) << "\n";
  out << "# seed=" << truth.seed << "\n";
  out << "# level=" << truth.level << "\n";
  out << "# samples=" << truth.samples << "\n";
  out << "step,value,std_error\n";
  for (std::size_t k = 0; k < truth.value.size(); ++k)
    out << k + (truth.problem == Problem::Forward ? 0 : 1) << "," << format_double(truth.value[k]) << ","
        << format_double(truth.std_error[k]) << "\n";
  out.flush();
  if (!out) throw ConfigError("write failed for " + path);
}

GroundTruth read_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ground truth " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  GroundTruth truth;
  std::string line;
  std::istringstream meta(buffer.str());
  while (std::getline(meta, line)) {
    if (line.rfind("# ", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2);
    const std::string value = line.substr(eq + 1);
    if (key == "model") truth.model = value;
    if (key == "problem") truth.problem = value == "forward" ? Problem::Forward : Problem::Filtering;
    if (key == "seed") truth.seed = std::stoull(value);
    if (key == "level") truth.level = std::stoi(value);
    if (key == "samples") truth.samples = std::stoull(value);
  }
  std::istringstream body(buffer.str());
  const CsvTable table = parse_csv(body);
  const int v = table.require_column("value");
  const int e = table.require_column("std_error");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    truth.value.push_back(table.number(r, v));
    truth.std_error.push_back(table.number(r, e));
  }
  if (truth.value.empty()) throw ParseError("ground truth has no values", 1);
  return truth;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const GroundTruth& truth) {
  config.validate();
  if (truth.problem != config.problem || truth.model != config.model)
    throw ConfigError("ground truth was made for a different model or problem");
  const auto bundle = make_model(config.model, config.params);
  const auto phi = coordinate<double>(bundle.observed);
  const bool forward = config.problem == Problem::Forward;
  if (!forward && truth.value.size() != static_cast<std::size_t>(config.steps))
    throw ConfigError("ground truth has " + std::to_string(truth.value.size()) + " steps, config has " +
                      std::to_string(config.steps));
  const double target = truth.value.back();

  StateSpaceModel<double> ssm;
  if (!forward) ssm = experiment_state_space(config, bundle, experiment_data(config).observations);

  ExperimentResult result;
  for (const auto& method : config.methods) {
    for (int grid : grid_of(config, method)) {
      const LevelPlan plan = plan_for(config, method, grid);
      auto run_one = [&](std::uint64_t rep) {
        const std::uint64_t seed = derive_seed(config.seed, kRepTag, rep);
        const auto start = std::chrono::steady_clock::now();
        RunOutcome out;
        if (forward) {
          MlmcReport r;
          const RunOptions opt{1};
          if (method == "stdmc")
            r = run_single_level<double>(*bundle.model, phi, bundle.x0, bundle.horizon, plan.base_level, plan.M[0],
                                         seed, SchemeKind::Weak2, opt);
          else if (method == "mlmc")
            r = run_plain_mlmc<double>(*bundle.model, phi, bundle.x0, plan, seed, opt);
          else if (method == "amlmc")
            r = run_amlmc<double>(*bundle.model, phi, bundle.x0, plan, seed, opt);
          else
            r = run_ammlmc<double>(*bundle.model, phi, bundle.x0, plan, seed, opt);
          out.value = r.estimate;
          out.step_cost = r.step_cost;
        } else {
          const FilterOptions opt{ResamplePolicy::AdaptiveEss, 1};
          MlpfReport r;
          if (method == "pf")
            r = run_pf_report<double>(ssm, plan.base_level, plan.M[0], phi, seed, opt);
          else
            r = run_mlpf<double>(ssm, plan, phi, seed,
                                 method == "mlpf"    ? MlpfVariant::Mlpf
                                 : method == "amlpf" ? MlpfVariant::Amlpf
                                                     : MlpfVariant::Ammlpf,
                                 opt);
          out.value = r.estimate.back();
          out.step_cost = r.step_cost;
        }
        out.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
      };
      const auto runs =
          parallel_map<RunOutcome>(static_cast<std::uint64_t>(config.repetitions), config.threads, run_one);

      RunningMoments sq, err;
      MethodPoint p;
      p.method = method;
      p.grid = grid;
      p.epsilon = plan.epsilon;
      p.finest_level = plan.finest();
      p.levels = plan.L + 1;
      p.repetitions = config.repetitions;
      p.cost = plan.paper_cost();
      for (const auto& r : runs) {
        const double e = r.value - target;
        err.add(e);
        sq.add(e * e);
        p.step_cost += r.step_cost / static_cast<double>(runs.size());
        p.wall_seconds += r.wall / static_cast<double>(runs.size());
      }
      p.mse = sq.mean;
      p.mse_std_error = sq.std_error();
      p.bias = err.mean;
      result.points.push_back(p);
    }
  }
  result.rates = fit_rates(result.points, &result.warnings);
  result.pairing = pair_by_mse(result.points);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (!std::filesystem::exists(config.truth_path())) throw ConfigError(truth_hint(config));
  return run_experiment(config, read_ground_truth(config.truth_path()));
}

RateTable fit_rates(const std::vector<MethodPoint>& points, std::vector<std::string>* warnings) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& p : points) {
    if (!series.count(p.method)) order.push_back(p.method);
    auto& s = series[p.method];
    if (p.mse > 0 && p.cost > 0) {
      s.first.push_back(std::log(p.mse));
      s.second.push_back(std::log(p.cost));
    }
  }
  RateTable table;
  for (const auto& m : order) {
    const auto& [x, y] = series[m];
    if (x.size() < 2) {
      if (warnings) warnings->push_back("method " + m + ": fewer than two usable points, no rate fitted");
      continue;
    }
    const auto fit = fit_line(x, y);
    if (!std::isfinite(fit.slope)) {
      if (warnings) warnings->push_back("method " + m + ": non-finite slope");
      continue;
    }
    table.push_back({m, fit.slope, fit.intercept, fit.r_squared, static_cast<int>(x.size())});
  }
  return table;
}

std::vector<PairingRow> pair_by_mse(const std::vector<MethodPoint>& points) {
  std::vector<PairingRow> out;
  for (const auto& p : points) {
    if (!is_amm(p.method) || !(p.mse > 0)) continue;
    const std::string partner = p.method == "ammlmc" ? "amlmc" : "amlpf";
    const MethodPoint* best = nullptr;
    for (const auto& q : points) {
      if (q.method != partner || !(q.mse > 0)) continue;
      if (!best || std::abs(std::log(q.mse / p.mse)) < std::abs(std::log(best->mse / p.mse))) best = &q;
    }
    if (!best) continue;
    out.push_back({p.method, p.grid, p.mse, p.cost, partner, best->grid, best->mse, best->cost});
  }
  return out;
}

namespace {

const char* kPointsHeader =
    "method,grid,epsilon,finest_level,levels,repetitions,mse,mse_std_error,bias,cost,step_cost,wall_seconds";

}  // namespace

void write_points_csv(const std::string& path, const std::vector<MethodPoint>& points) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << kPointsHeader << "\n";
  for (const auto& p : points)
    out << p.method << "," << p.grid << "," << format_double(p.epsilon) << "," << p.finest_level << "," << p.levels
        << "," << p.repetitions << "," << format_double(p.mse) << "," << format_double(p.mse_std_error) << ","
        << format_double(p.bias) << "," << format_double(p.cost) << "," << format_double(p.step_cost) << ","
        << format_double(p.wall_seconds) << "\n";
  if (!out) throw ConfigError("write failed for " + path);
}

std::vector<MethodPoint> parse_points_csv(std::istream& in) {
  const CsvTable t = parse_csv(in);
  const int method = t.require_column("method");
  const int grid = t.require_column("grid");
  const int mse = t.require_column("mse");
  const int cost = t.require_column("cost");
  const int eps = t.column("epsilon"), finest = t.column("finest_level"), levels = t.column("levels");
  const int reps = t.column("repetitions"), mse_se = t.column("mse_std_error"), bias = t.column("bias");
  const int steps = t.column("step_cost"), wall = t.column("wall_seconds");
  std::vector<MethodPoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    MethodPoint p;
    p.method = t.rows[r][static_cast<std::size_t>(method)];
    if (p.method.empty()) throw ParseError("empty method name", t.lines[r]);
    p.grid = static_cast<int>(t.number(r, grid));
    p.mse = t.number(r, mse);
    p.cost = t.number(r, cost);
    if (eps >= 0) p.epsilon = t.number(r, eps);
    if (finest >= 0) p.finest_level = static_cast<int>(t.number(r, finest));
    if (levels >= 0) p.levels = static_cast<int>(t.number(r, levels));
    if (reps >= 0) p.repetitions = static_cast<int>(t.number(r, reps));
    if (mse_se >= 0) p.mse_std_error = t.number(r, mse_se);
    if (bias >= 0) p.bias = t.number(r, bias);
    if (steps >= 0) p.step_cost = t.number(r, steps);
    if (wall >= 0) p.wall_seconds = t.number(r, wall);
    out.push_back(p);
  }
  return out;
}

std::vector<MethodPoint> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return parse_points_csv(in);
}

void write_rates_csv(const std::string& path, const RateTable& rates) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << "method,slope,intercept,r_squared,points\n";
  for (const auto& r : rates)
    out << r.method << "," << format_double(r.slope) << "," << format_double(r.intercept) << ","
        << format_double(r.r_squared) << "," << r.points << "\n";
}

void write_pairing_csv(const std::string& path, const std::vector<PairingRow>& pairing) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << "method,grid,mse,cost,partner,partner_grid,partner_mse,partner_cost\n";
  for (const auto& p : pairing)
    out << p.method << "," << p.grid << "," << format_double(p.mse) << "," << format_double(p.cost) << ","
        << p.partner << "," << p.partner_grid << "," << format_double(p.partner_mse) << ","
        << format_double(p.partner_cost) << "\n";
}

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result) {
  const std::string dir = config.output + "/";
  write_points_csv(dir + "points.csv", result.points);
  write_rates_csv(dir + "rates.csv", result.rates);
  write_pairing_csv(dir + "pairing.csv", result.pairing);
  const std::string title = config.model + " " + to_string(config.problem) + ": cost against MSE";
  std::ofstream svg(dir + to_string(config.problem) + ".svg", std::ios::binary);
  if (!svg) throw ConfigError("cannot write plot under " + dir);
  svg << render_svg(result.points, title);
}

}  // namespace amlmc
