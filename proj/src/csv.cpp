#include "amlmc/csv.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace amlmc {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ParseError("missing column '" + name + "'", lines.empty() ? 1 : lines.front() - 1);
  return c;
}

double CsvTable::number(std::size_t row, int col) const {
  const std::string& text = rows.at(row).at(static_cast<std::size_t>(col));
  double value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ParseError("column '" + header[static_cast<std::size_t>(col)] + "': not a number '" + text + "'",
                     lines.at(row));
  return value;
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string raw;
  int line = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty() || raw.front() == '#') continue;
    auto fields = split_fields(raw);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line);
    table.rows.push_back(std::move(fields));
    table.lines.push_back(line);
  }
  if (!have_header) throw ParseError("missing header row", line == 0 ? 1 : line);
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return parse_csv(in);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

void ensure_parent_directory(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_observations(const std::string& path, const std::vector<Observation>& observations,
                        const std::vector<Vector<double>>& latent) {
  if (!latent.empty() && latent.size() != observations.size())
    throw ArgumentError("latent path and observations differ in length");
  ensure_parent_directory(path);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  const auto dy = observations.empty() ? 0 : observations.front().size();
  const auto dx = latent.empty() ? 0 : latent.front().size();
  out << "step";
  for (Eigen::Index i = 0; i < dy; ++i) out << ",y" << i;
  for (Eigen::Index i = 0; i < dx; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t k = 0; k < observations.size(); ++k) {
    out << k + 1;
    for (Eigen::Index i = 0; i < dy; ++i) out << "," << format_double(observations[k](i));
    for (Eigen::Index i = 0; i < dx; ++i) out << "," << format_double(latent[k](i));
    out << "\n";
  }
  if (!out) throw ConfigError("write failed for " + path);
}

std::vector<Observation> read_observations(const std::string& path) {
  const CsvTable table = read_csv_file(path);
  table.require_column("step");
  std::vector<int> ycols;
  for (int i = 0;; ++i) {
    const int c = table.column("y" + std::to_string(i));
    if (c < 0) break;
    ycols.push_back(c);
  }
  if (ycols.empty()) throw ParseError("observation file has no y0 column", 1);
  std::vector<Observation> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Observation y(static_cast<Eigen::Index>(ycols.size()));
    for (std::size_t i = 0; i < ycols.size(); ++i) y(static_cast<Eigen::Index>(i)) = table.number(r, ycols[i]);
    out.push_back(y);
  }
  return out;
}

}  // namespace amlmc
