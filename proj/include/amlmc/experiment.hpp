#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amlmc/config.hpp"
#include "amlmc/filtering.hpp"
#include "amlmc/mlmc.hpp"

namespace amlmc {

/// High-resolution single-level reference: one value (forward) or one per
/// observation step (filtering).
struct GroundTruth {
  std::string model;
  Problem problem = Problem::Forward;
  std::uint64_t seed = 0;
  int level = 0;
  std::uint64_t samples = 0;
  std::vector<double> value;
  std::vector<double> std_error;  // NaN where a single filter run gives no error estimate
};

/// Finest Weak-2 level of the sweep plus the configured offset.
int reference_level(const ExperimentConfig& config);

/// Seed of the ground-truth run derived from the master seed.
std::uint64_t truth_seed(const ExperimentConfig& config);

GroundTruth make_ground_truth(const ExperimentConfig& config);
void write_ground_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::string& path);

/// One method at one grid point, summarised over the repetitions.
struct MethodPoint {
  std::string method;
  int grid = 0;
  double epsilon = 0.0;
  int finest_level = 0;
  int levels = 0;  // L + 1
  int repetitions = 0;
  double mse = 0.0;
  double mse_std_error = 0.0;
  double bias = 0.0;
  double cost = 0.0;       // sum_l M_l / Delta_l
  double step_cost = 0.0;  // single-leg steps per repetition
  double wall_seconds = 0.0;
};

/// OLS fit of log(cost) against log(MSE) per method.
struct RateRow {
  std::string method;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

using RateTable = std::vector<RateRow>;

/// AMM grid point matched to the antithetic Weak-2 point of nearest MSE.
struct PairingRow {
  std::string method;
  int grid = 0;
  double mse = 0.0;
  double cost = 0.0;
  std::string partner;
  int partner_grid = 0;
  double partner_mse = 0.0;
  double partner_cost = 0.0;
};

struct ExperimentResult {
  std::vector<MethodPoint> points;
  RateTable rates;
  std::vector<PairingRow> pairing;
  std::vector<std::string> warnings;
};

/// Plan used for `method` at grid value `grid`; Std MC and PF are one-level plans.
LevelPlan plan_for(const ExperimentConfig& config, const std::string& method, int grid);

/// Observations for the filtering problem, regenerated from the config seed.
SyntheticData<double> experiment_data(const ExperimentConfig& config);
StateSpaceModel<double> experiment_state_space(const ExperimentConfig& config, const BundledModel& bundle,
                                               const std::vector<Observation>& observations);

ExperimentResult run_experiment(const ExperimentConfig& config, const GroundTruth& truth);
/// Loads the ground truth from config.truth_path().
ExperimentResult run_experiment(const ExperimentConfig& config);

RateTable fit_rates(const std::vector<MethodPoint>& points, std::vector<std::string>* warnings = nullptr);
std::vector<PairingRow> pair_by_mse(const std::vector<MethodPoint>& points);

void write_points_csv(const std::string& path, const std::vector<MethodPoint>& points);
std::vector<MethodPoint> read_points_csv(const std::string& path);
std::vector<MethodPoint> parse_points_csv(std::istream& in);
void write_rates_csv(const std::string& path, const RateTable& rates);
void write_pairing_csv(const std::string& path, const std::vector<PairingRow>& pairing);

/// points.csv, rates.csv, pairing.csv and <problem>.svg under config.output.
void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result);

}  // namespace amlmc
