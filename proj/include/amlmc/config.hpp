#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "amlmc/models.hpp"

namespace amlmc {

/// Flat key = value text grouped under [section] headers. Keys before the
/// first header live in section "". '#' starts a comment.
struct ConfigDocument {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::map<std::string, std::map<std::string, int>> lines;  // where each key was defined

  bool has(const std::string& section, const std::string& key) const;
  const std::string* find(const std::string& section, const std::string& key) const;
  int line_of(const std::string& section, const std::string& key) const;
};

ConfigDocument parse_config(std::istream& in);
ConfigDocument parse_config_text(const std::string& text);
ConfigDocument load_config_file(const std::string& path);

enum class Problem { Forward, Filtering };

const char* to_string(Problem problem);

struct GroundTruthSettings {
  int level_offset = 3;          // L_ref = finest level of the sweep + offset
  std::uint64_t samples = 1000000;  // paths (forward) or particles (filtering)
  std::string path;              // empty: <output>/truth.csv
};

struct ExperimentConfig {
  std::string name = "custom";
  std::string model = "fhn";
  ParamMap params;
  Problem problem = Problem::Forward;
  std::vector<std::string> methods;
  std::vector<int> grid{1, 2, 3, 4};
  std::vector<int> amm_grid{2, 4, 6, 8};
  int repetitions = 50;
  int base_level = 0;
  std::map<std::string, double> constants;  // allocation constant c per method
  int steps = 100;        // filtering horizon in observation intervals
  int data_level = 10;    // resolution of the synthetic data path
  GroundTruthSettings truth;
  std::uint64_t seed = 20240601;
  std::string output = "out";
  int threads = 0;

  void validate() const;
  double constant(const std::string& method) const;
  std::string truth_path() const;
  bool has_method(const std::string& method) const;
};

/// Methods per problem, in plotting order.
const std::vector<std::string>& forward_methods();
const std::vector<std::string>& filtering_methods();

ExperimentConfig config_from_document(const ConfigDocument& doc);
ExperimentConfig load_experiment_config(const std::string& path);

/// Canonical text form; parsing it back gives an equal config.
std::string to_config_text(const ExperimentConfig& config);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

}  // namespace amlmc
