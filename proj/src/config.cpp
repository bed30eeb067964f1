#include "amlmc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "amlmc/csv.hpp"

namespace amlmc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& text, int line) {
  double value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError("expected a number, got '" + text + "'", line);
  return value;
}

template <typename Int>
Int parse_int(const std::string& text, int line) {
  Int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError("expected an integer, got '" + text + "'", line);
  return value;
}

std::vector<int> parse_int_list(const std::string& text, int line) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_int<int>(item, line));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::string join(const std::vector<int>& items) {
  std::string out;
  for (int v : items) out += (out.empty() ? "" : ", ") + std::to_string(v);
  return out;
}

}  // namespace

bool ConfigDocument::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

const std::string* ConfigDocument::find(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s == sections.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

int ConfigDocument::line_of(const std::string& section, const std::string& key) const {
  const auto s = lines.find(section);
  if (s == lines.end()) return 0;
  const auto k = s->second.find(key);
  return k == s->second.end() ? 0 : k->second;
}

ConfigDocument parse_config(std::istream& in) {
  ConfigDocument doc;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError("unterminated section header", line);
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw ParseError("empty section name", line);
      doc.sections[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line);
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw ParseError("missing key before '='", line);
    if (doc.has(section, key)) throw ParseError("duplicate key '" + key + "'", line);
    doc.sections[section][key] = trim(text.substr(eq + 1));
    doc.lines[section][key] = line;
  }
  return doc;
}

ConfigDocument parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ConfigDocument load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

const char* to_string(Problem problem) { return problem == Problem::Forward ? "forward" : "filtering"; }

const std::vector<std::string>& forward_methods() {
  static const std::vector<std::string> methods{"stdmc", "mlmc", "amlmc", "ammlmc"};
  return methods;
}

const std::vector<std::string>& filtering_methods() {
  static const std::vector<std::string> methods{"pf", "mlpf", "amlpf", "ammlpf"};
  return methods;
}

void ExperimentConfig::validate() const {
  if (repetitions < 2) throw ConfigError("repetitions must be >= 2");
  if (methods.empty()) throw ConfigError("method list is empty");
  if (grid.empty()) throw ConfigError("grid is empty");
  if (has_method("ammlmc") || has_method("ammlpf"))
    if (amm_grid.empty()) throw ConfigError("amm_grid is empty");
  const auto& known = problem == Problem::Forward ? forward_methods() : filtering_methods();
  for (const auto& m : methods)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ConfigError("unknown method '" + m + "' for the " + std::string(to_string(problem)) + " problem");
  for (int l : grid)
    if (l < 1) throw ConfigError("grid values must be >= 1");
  for (int l : amm_grid)
    if (l < 1) throw ConfigError("amm_grid values must be >= 1");
  if (base_level < 0) throw ConfigError("base_level must be >= 0");
  for (const auto& [m, c] : constants)
    if (!(c > 0)) throw ConfigError("allocation constant for " + m + " must be positive");
  if (problem == Problem::Filtering && steps < 1) throw ConfigError("filter steps must be >= 1");
  if (data_level < 0 || data_level > kMaxLevel) throw ConfigError("data_level out of range");
  if (truth.level_offset < 0) throw ConfigError("truth level_offset must be >= 0");
  if (truth.samples < 2) throw ConfigError("truth samples must be >= 2");
  make_model(model, params);  // rejects unknown models and parameters
}

double ExperimentConfig::constant(const std::string& method) const {
  const auto it = constants.find(method);
  return it == constants.end() ? 1.0 : it->second;
}

std::string ExperimentConfig::truth_path() const { return truth.path.empty() ? output + "/truth.csv" : truth.path; }

bool ExperimentConfig::has_method(const std::string& method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

ExperimentConfig config_from_document(const ConfigDocument& doc) {
  static const std::map<std::string, std::vector<std::string>> allowed{
      {"experiment",
       {"name", "problem", "methods", "grid", "amm_grid", "repetitions", "base_level", "seed", "threads", "output"}},
      {"filter", {"steps", "data_level"}},
      {"truth", {"level_offset", "samples", "path"}},
  };
  for (const auto& [section, keys] : doc.sections) {
    if (section == "model" || section == "allocation") continue;
    const auto it = allowed.find(section);
    if (it == allowed.end()) {
      const int line = keys.empty() ? 0 : doc.line_of(section, keys.begin()->first);
      throw ParseError("unknown section [" + section + "]", line);
    }
    for (const auto& [key, value] : keys)
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ParseError("unknown key '" + key + "' in [" + section + "]", doc.line_of(section, key));
  }

  ExperimentConfig c;
  auto get = [&](const std::string& s, const std::string& k, auto&& apply) {
    if (const auto* v = doc.find(s, k)) apply(*v, doc.line_of(s, k));
  };
  get("experiment", "name", [&](const std::string& v, int) { c.name = v; });
  get("experiment", "problem", [&](const std::string& v, int line) {
    if (v == "forward")
      c.problem = Problem::Forward;
    else if (v == "filtering" || v == "filter")
      c.problem = Problem::Filtering;
    else
      throw ParseError("problem must be forward or filtering", line);
  });
  c.methods = c.problem == Problem::Forward ? forward_methods() : filtering_methods();
  get("experiment", "methods", [&](const std::string& v, int) { c.methods = split_list(v); });
  get("experiment", "grid", [&](const std::string& v, int line) { c.grid = parse_int_list(v, line); });
  get("experiment", "amm_grid", [&](const std::string& v, int line) { c.amm_grid = parse_int_list(v, line); });
  get("experiment", "repetitions", [&](const std::string& v, int line) { c.repetitions = parse_int<int>(v, line); });
  get("experiment", "base_level", [&](const std::string& v, int line) { c.base_level = parse_int<int>(v, line); });
  get("experiment", "seed", [&](const std::string& v, int line) { c.seed = parse_int<std::uint64_t>(v, line); });
  get("experiment", "threads", [&](const std::string& v, int line) { c.threads = parse_int<int>(v, line); });
  get("experiment", "output", [&](const std::string& v, int) { c.output = v; });
  get("filter", "steps", [&](const std::string& v, int line) { c.steps = parse_int<int>(v, line); });
  get("filter", "data_level", [&](const std::string& v, int line) { c.data_level = parse_int<int>(v, line); });
  get("truth", "level_offset",
      [&](const std::string& v, int line) { c.truth.level_offset = parse_int<int>(v, line); });
  get("truth", "samples",
      [&](const std::string& v, int line) { c.truth.samples = parse_int<std::uint64_t>(v, line); });
  get("truth", "path", [&](const std::string& v, int) { c.truth.path = v; });

  if (const auto it = doc.sections.find("model"); it != doc.sections.end()) {
    for (const auto& [key, value] : it->second) {
      if (key == "name")
        c.model = value;
      else
        c.params[key] = parse_double(value, doc.line_of("model", key));
    }
  }
  if (const auto it = doc.sections.find("allocation"); it != doc.sections.end())
    for (const auto& [key, value] : it->second) c.constants[key] = parse_double(value, doc.line_of("allocation", key));
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) { return config_from_document(load_config_file(path)); }

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "name = " << c.name << "\n";
  out << "problem = " << to_string(c.problem) << "\n";
  out << "methods = " << join(c.methods) << "\n";
  out << "grid = " << join(c.grid) << "\n";
  out << "amm_grid = " << join(c.amm_grid) << "\n";
  out << "repetitions = " << c.repetitions << "\n";
  out << "base_level = " << c.base_level << "\n";
  out << "seed = " << c.seed << "\n";
  out << "threads = " << c.threads << "\n";
  out << "output = " << c.output << "\n";
  out << "\n[model]\nname = " << c.model << "\n";
  for (const auto& [k, v] : c.params) out << k << " = " << format_double(v) << "\n";
  out << "\n[allocation]\n";
  for (const auto& [k, v] : c.constants) out << k << " = " << format_double(v) << "\n";
  if (c.problem == Problem::Filtering) {
    out << "\n[filter]\n";
    out << "steps = " << c.steps << "\n";
    out << "data_level = " << c.data_level << "\n";
  }
  out << "\n[truth]\n";
  out << "level_offset = " << c.truth.level_offset << "\n";
  out << "samples = " << c.truth.samples << "\n";
  if (!c.truth.path.empty()) out << "path = " << c.truth.path << "\n";
  return out.str();
}

namespace {

ParamMap fhn_table() {
  return {{"x1", 0.0}, {"x2", 0.0}, {"epsilon", 0.1}, {"sigma", 0.3}, {"gamma", 1.5},
          {"beta", 0.3}, {"s", 0.01}, {"T", 100.0}, {"obs_interval", 1.0}, {"obs_sd", 0.1}};
}

ParamMap heston_table() {
  return {{"s0", 100.0}, {"v0", 0.09}, {"r", 0.04},  {"alpha", 2.0},        {"theta", 0.09},
          {"mu", 0.1},   {"rho", 0.7}, {"T", 1.0},   {"obs_interval", 0.01}, {"obs_sd", 2.0}};
}

ExperimentConfig forward_base(const std::string& name, const std::string& model, ParamMap params, int base_level) {
  ExperimentConfig c;
  c.name = name;
  c.model = model;
  c.params = std::move(params);
  c.problem = Problem::Forward;
  c.methods = forward_methods();
  c.base_level = base_level;
  c.output = "out/" + name;
  return c;
}

ExperimentConfig filter_base(const std::string& name, const std::string& model, ParamMap params, int base_level) {
  ExperimentConfig c = forward_base(name, model, std::move(params), base_level);
  c.problem = Problem::Filtering;
  c.methods = filtering_methods();
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"paper-forward-fhn", "paper-forward-heston", "paper-filter-fhn",   "paper-filter-heston",
          "desk-forward-fhn",  "desk-forward-heston",  "desk-filter-fhn",    "desk-filter-heston"};
}

// FHN is stiff (drift rate 1/epsilon), so its sweeps start from a base level
// with step <= 1/25 where the explicit schemes are stable.
ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "paper-forward-fhn" || name == "desk-forward-fhn") {
    const bool desk = name == "desk-forward-fhn";
    ParamMap p = fhn_table();
    if (desk) p["T"] = 10.0;
    c = forward_base(name, "fhn", p, desk ? 8 : 12);
    c.constants = {{"stdmc", 4.0}, {"mlmc", 0.25}, {"amlmc", 16.0}, {"ammlmc", 16.0}};
    // Weak-2 level corrections are below 1e-3 from the base level on, so one
    // extra level suffices; Var(X_T) ~ 0.6 sets the sample count.
    c.truth.level_offset = 1;
    c.truth.samples = desk ? 100000 : 1000000;
  } else if (name == "paper-forward-heston" || name == "desk-forward-heston") {
    const bool desk = name == "desk-forward-heston";
    c = forward_base(name, "heston", heston_table(), 0);
    c.constants = {{"stdmc", 40.0}, {"mlmc", 4.0}, {"amlmc", 4.0}, {"ammlmc", 8.0}};
    if (desk) c.truth.level_offset = 1;
    c.truth.samples = 10000000;
  } else if (name == "paper-filter-fhn" || name == "desk-filter-fhn") {
    const bool desk = name == "desk-filter-fhn";
    c = filter_base(name, "fhn", fhn_table(), 5);
    c.steps = desk ? 5 : 100;
    c.data_level = 12;
    // M Var of the PF and coupled-PF estimates only settles from ~64 particles
    // per level; from grid 2 on the PF and the AMLPF base level stay above that.
    if (desk) c.grid = {2, 3, 4};
    c.constants = {{"pf", 16.0}, {"mlpf", 0.25}, {"amlpf", 4.0}, {"ammlpf", 0.25}};
    // Var of the final-step PF estimate is ~0.01 / M, so 5e4 particles keep
    // the truth error a few percent of the smallest MSE in the desk sweep.
    c.truth.level_offset = 1;
    c.truth.samples = desk ? 50000 : 1000000;
  } else if (name == "paper-filter-heston" || name == "desk-filter-heston") {
    const bool desk = name == "desk-filter-heston";
    c = filter_base(name, "heston", heston_table(), 0);
    c.steps = desk ? 20 : 100;
    c.data_level = 8;
    c.constants = {{"pf", 4.0}, {"mlpf", 1.0}, {"amlpf", 16.0}, {"ammlpf", 4.0}};
    c.truth.level_offset = 1;
    c.truth.samples = desk ? 200000 : 1000000;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

}  // namespace amlmc
