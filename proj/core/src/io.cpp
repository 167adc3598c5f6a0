#include "ionaddr/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ionaddr/errors.hpp"

namespace ionaddr {

std::string format_number(double v) {
  char buf[64];
  // to_chars never consults the locale.
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw DomainError("write_csv: header and column counts differ");
  const std::size_t n = columns.empty() ? 0 : columns[0].size();
  for (const auto& c : columns)
    if (c.size() != n) throw DomainError("write_csv: columns differ in length");
  auto out = open_out(path);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << format_number(columns[k][i]);
    out << '\n';
  }
}

void write_matrix_csv(const std::string& path, const Grid& grid, const std::vector<double>& values) {
  if (values.size() != grid.size()) throw DomainError("write_matrix_csv: value count does not match the lattice");
  auto out = open_out(path);
  out << "y\\x";
  for (std::size_t i = 0; i < grid.nx; ++i) out << ',' << format_number(grid.x(i));
  out << '\n';
  for (std::size_t j = 0; j < grid.ny; ++j) {
    out << format_number(grid.is_1d() ? 0.0 : grid.y(j));
    for (std::size_t i = 0; i < grid.nx; ++i) out << ',' << format_number(values[grid.index(i, j)]);
    out << '\n';
  }
}

void write_profile_csv(const std::string& path, const RIProfile& p) {
  write_matrix_csv(path, p.grid(), std::vector<double>(p.samples().begin(), p.samples().end()));
}

void write_mode_csv(const std::string& stem, const ModeField& m) {
  std::vector<double> re(m.amplitude.size()), im(m.amplitude.size());
  for (std::size_t i = 0; i < re.size(); ++i) {
    re[i] = m.amplitude[i].real();
    im[i] = m.amplitude[i].imag();
  }
  write_matrix_csv(stem + "_re.csv", m.grid, re);
  write_matrix_csv(stem + "_im.csv", m.grid, im);
}

std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("read_csv: cannot open " + path);
  std::string line;
  std::vector<std::string> header;
  if (!std::getline(in, line)) throw DomainError("read_csv: empty file " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= cols.size()) throw DomainError("read_csv: row wider than header in " + path);
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (r.ec != std::errc{}) throw DomainError("read_csv: bad number '" + cell + "' in " + path);
      cols[k++].push_back(v);
    }
    if (k != cols.size()) throw DomainError("read_csv: short row in " + path);
  }
  return {header, cols};
}

}  // namespace ionaddr
