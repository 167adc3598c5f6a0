#pragma once

#include <string>
#include <vector>

#include "ionaddr/grid.hpp"
#include "ionaddr/mode_solver.hpp"

namespace ionaddr {

/// Shortest text that reads back to the same double; never locale dependent.
std::string format_number(double v);

/// Column-oriented CSV with a header row. Columns must share one length.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

/// Matrix CSV: header row of x coordinates (first cell "y\\x"), then one row
/// per y with its coordinate first. One-dimensional data gives a single row.
void write_matrix_csv(const std::string& path, const Grid& grid, const std::vector<double>& values);

void write_profile_csv(const std::string& path, const RIProfile& p);
/// Writes `<stem>_re.csv` and `<stem>_im.csv`.
void write_mode_csv(const std::string& stem, const ModeField& m);

/// Reads a column CSV with a header row; returns header and columns.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(const std::string& path);

}  // namespace ionaddr
