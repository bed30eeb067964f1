#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "amlmc/config.hpp"
#include "amlmc/csv.hpp"
#include "amlmc/experiment.hpp"
#include "amlmc/svg_plot.hpp"

using namespace amlmc;

namespace {

struct CommonOptions {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  std::string out;
  int threads = -1;
  int steps = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "built-in experiment preset");
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("--out", o.out, "override the output directory");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd->add_option("--steps", o.steps, "override the filtering horizon");
}

ExperimentConfig resolve(const CommonOptions& o) {
  if (o.config.empty() == o.preset.empty()) throw ConfigError("give exactly one of --config or --preset");
  ExperimentConfig c = o.config.empty() ? preset(o.preset) : load_experiment_config(o.config);
  if (o.seed != 0) c.seed = o.seed;
  if (!o.out.empty()) c.output = o.out;
  if (o.threads >= 0) c.threads = o.threads;
  if (o.steps > 0) c.steps = o.steps;
  c.validate();
  return c;
}

void print_result(const ExperimentResult& r) {
  std::printf("%-8s %5s %14s %14s %10s\n", "method", "grid", "mse", "cost", "wall[s]");
  for (const auto& p : r.points)
    std::printf("%-8s %5d %14.6g %14.6g %10.3f\n", p.method.c_str(), p.grid, p.mse, p.cost, p.wall_seconds);
  std::printf("\nrates (log cost against log MSE)\n");
  for (const auto& rate : r.rates)
    std::printf("%-8s slope %7.3f  R2 %.3f  (%d points)\n", rate.method.c_str(), rate.slope, rate.r_squared,
                rate.points);
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int run_truth(const ExperimentConfig& c) {
  const auto truth = make_ground_truth(c);
  write_ground_truth(c.truth_path(), truth);
  if (c.problem == Problem::Filtering) {
    const auto data = experiment_data(c);
    write_observations(c.output + "/observations.csv", data.observations, data.latent);
  }
  std::printf("ground truth at level %d with %llu samples -> %s\n", truth.level,
              static_cast<unsigned long long>(truth.samples), c.truth_path().c_str());
  std::printf("final value %.10g\n", truth.value.back());
  return 0;
}

int run_sweep(const ExperimentConfig& c, Problem expected) {
  if (c.problem != expected)
    throw ConfigError(std::string("config describes the ") + to_string(c.problem) + " problem");
  const auto result = run_experiment(c);
  write_experiment_outputs(c, result);
  print_result(result);
  std::printf("\nwrote %s/points.csv, rates.csv, pairing.csv, %s.svg\n", c.output.c_str(), to_string(c.problem));
  return 0;
}

int run_selftest() {
  int failures = 0;
  auto report = [&](const char* name, bool ok, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    if (!ok) ++failures;
  };

  const auto ou = make_model("linear-ou");
  const auto phi = coordinate<double>(0);
  const auto plan = allocate_amlmc(1.0 / 64, 4.0, ou.horizon);
  const auto a = run_amlmc<double>(*ou.model, phi, ou.x0, plan, 7, {0});
  double se2 = 0;
  for (const auto& lv : a.levels) se2 += lv.variance / static_cast<double>(lv.samples);
  const double exact = std::exp(-1.0);
  report("amlmc-ou-mean", std::abs(a.estimate - exact) < 4 * std::sqrt(se2) + 1e-3,
         "estimate " + format_double(a.estimate) + " vs " + format_double(exact));

  const auto b = run_amlmc<double>(*ou.model, phi, ou.x0, plan, 7, {1});
  report("thread-invariance", a.estimate == b.estimate, "bitwise equal estimates");

  Eigen::VectorXd w1(3), w2(3);
  w1 << 0.5, 0.3, 0.2;
  w2 << 0.2, 0.3, 0.5;
  CounterStream u(StreamKey{11, 0, 0, 0}, StreamTag::Resample);
  int met = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto [i1, i2] = maximal_coupling_sample(w1, w2, [&] { return u.uniform(); });
    met += i1 == i2;
  }
  const double p = static_cast<double>(met) / n;
  report("maximal-coupling-meeting", std::abs(p - 0.7) < 4 * std::sqrt(0.21 / n),
         "meeting rate " + format_double(p) + " vs 0.7");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Antithetic multilevel Monte Carlo and particle filter experiments"};
  app.require_subcommand(1);
  CommonOptions truth_opt, forward_opt, filter_opt;
  auto* truth = app.add_subcommand("truth", "compute and store the high-resolution ground truth");
  add_common(truth, truth_opt);
  auto* forward = app.add_subcommand("forward", "cost-vs-MSE sweep for Std MC, MLMC, AMLMC, AMMLMC");
  add_common(forward, forward_opt);
  auto* filter = app.add_subcommand("filter", "cost-vs-MSE sweep for PF, MLPF, AMLPF, AMMLPF");
  add_common(filter, filter_opt);

  auto* plot = app.add_subcommand("plot", "render a points CSV as a log-log SVG");
  std::string points_path, svg_path, title = "cost against MSE";
  plot->add_option("--points", points_path, "points CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--svg", svg_path, "output SVG")->required();
  plot->add_option("--title", title, "plot title");

  app.add_subcommand("selftest", "quick end-to-end sanity checks");
  auto* presets = app.add_subcommand("presets", "list built-in presets or print one as a config file");
  std::string show;
  presets->add_option("name", show, "preset to print");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*truth) return run_truth(resolve(truth_opt));
    if (*forward) return run_sweep(resolve(forward_opt), Problem::Forward);
    if (*filter) return run_sweep(resolve(filter_opt), Problem::Filtering);
    if (*plot) {
      for (const auto& w : emit_plot(points_path, svg_path, title)) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("wrote %s\n", svg_path.c_str());
      return 0;
    }
    if (*presets) {
      if (show.empty())
        for (const auto& name : preset_names()) std::printf("%s\n", name.c_str());
      else
        std::printf("%s", to_config_text(preset(show)).c_str());
      return 0;
    }
    return run_selftest();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
