#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "amlmc/filtering.hpp"

namespace amlmc {

/// Comma-separated table with a header row. Lines starting with '#' are
/// comments; `lines` holds the 1-based source line of each row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  int column(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name) const;
  double number(std::size_t row, int col) const;  // ParseError with the row's line
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// Observation file: columns step, y0.., x0.. (latent states optional).
void write_observations(const std::string& path, const std::vector<Observation>& observations,
                        const std::vector<Vector<double>>& latent);
std::vector<Observation> read_observations(const std::string& path);

/// Creates the parent directory of `path` if needed.
void ensure_parent_directory(const std::string& path);

}  // namespace amlmc
