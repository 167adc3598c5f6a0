#include <algorithm>
#include <vector>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/errors.hpp"
#include "ionaddr/mode_solver.hpp"

namespace ionaddr {

RIProfile effective_index_reduce(const RIProfile& p, double wavelength_um) {
  const Grid& g = p.grid();
  if (g.is_1d()) return p;
  Grid line;
  line.x0 = g.x0;
  line.dx = g.dx;
  line.nx = g.nx;
  Grid column;
  column.x0 = g.y0;
  column.dx = g.dy;
  column.nx = g.ny;

  SolverOptions opts;
  opts.auto_pad = false;
  std::vector<double> out(g.nx, p.n_clad());
  std::vector<double> col(g.ny);
  for (std::size_t i = 0; i < g.nx; ++i) {
    for (std::size_t j = 0; j < g.ny; ++j) col[j] = p.at(i, j);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (*hi - *lo <= 1e-15) {
      out[i] = col[0];
      continue;
    }
    const auto modes = solve_modes(RIProfile(column, p.n_clad(), col), wavelength_um, 1, opts);
    if (!modes.empty()) out[i] = modes.front().n_eff;
  }
  return RIProfile(line, p.n_clad(), std::move(out));
}

}  // namespace ionaddr
