#include "ionaddr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ionaddr/errors.hpp"

namespace ionaddr {

namespace {

std::size_t odd_count(double half_width, double step) {
  if (!(step > 0.0) || !(half_width >= 0.0)) throw DomainError("grid: spacing must be positive");
  const auto half = static_cast<std::size_t>(std::ceil(half_width / step - 1e-9));
  return 2 * half + 1;
}

}  // namespace

Grid Grid::centered_1d(double half_width_um, double dx_um) {
  Grid g;
  g.dx = dx_um;
  g.nx = odd_count(half_width_um, dx_um);
  g.x0 = -0.5 * static_cast<double>(g.nx - 1) * dx_um;
  g.ny = 1;
  g.y0 = 0.0;
  g.dy = dx_um;
  return g;
}

Grid Grid::centered_2d(double half_x_um, double half_y_um, double dx_um, double dy_um) {
  Grid g = centered_1d(half_x_um, dx_um);
  g.dy = dy_um;
  g.ny = odd_count(half_y_um, dy_um);
  g.y0 = -0.5 * static_cast<double>(g.ny - 1) * dy_um;
  return g;
}

Grid Grid::padded(std::size_t extra_x, std::size_t extra_y) const {
  Grid g = *this;
  g.nx += 2 * extra_x;
  g.x0 -= dx * static_cast<double>(extra_x);
  if (!is_1d()) {
    g.ny += 2 * extra_y;
    g.y0 -= dy * static_cast<double>(extra_y);
  }
  return g;
}

bool Grid::same_lattice(const Grid& o) const noexcept {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
  return nx == o.nx && ny == o.ny && close(x0, o.x0) && close(dx, o.dx) &&
         (is_1d() || (close(y0, o.y0) && close(dy, o.dy)));
}

void Grid::validate() const {
  if (!(dx > 0.0) || (!is_1d() && !(dy > 0.0))) throw DomainError("grid: spacings must be positive");
  if (nx == 0 || ny == 0) throw DomainError("grid: empty lattice");
}

RIProfile::RIProfile(Grid grid, double n_clad, std::vector<double> samples)
    : grid_(grid), n_clad_(n_clad), samples_(std::move(samples)) {
  grid_.validate();
  if (samples_.size() != grid_.size()) throw DomainError("RIProfile: sample count does not match grid");
  if (!(n_clad > 1.0)) throw DomainError("RIProfile: cladding index must exceed 1");
  for (double v : samples_) {
    if (!std::isfinite(v)) throw DomainError("RIProfile: non-finite sample");
    if (v < n_clad - 1e-9) throw DomainError("RIProfile: sample below cladding index");
  }
}

RIProfile RIProfile::uniform(const Grid& grid, double n_clad) {
  return RIProfile(grid, n_clad, std::vector<double>(grid.size(), n_clad));
}

double RIProfile::peak() const { return *std::max_element(samples_.begin(), samples_.end()); }

bool RIProfile::is_uniform(double tol) const {
  const auto [lo, hi] = std::minmax_element(samples_.begin(), samples_.end());
  return *hi - *lo <= tol;
}

double RIProfile::sample(double x, double y) const {
  const double fx = (x - grid_.x0) / grid_.dx;
  if (fx < 0.0 || fx > static_cast<double>(grid_.nx - 1)) return n_clad_;
  const auto i0 = std::min(static_cast<std::size_t>(fx), grid_.nx > 1 ? grid_.nx - 2 : 0);
  const double tx = grid_.nx > 1 ? fx - static_cast<double>(i0) : 0.0;
  const std::size_t i1 = std::min(i0 + 1, grid_.nx - 1);
  if (grid_.is_1d()) return (1.0 - tx) * at(i0) + tx * at(i1);

  const double fy = (y - grid_.y0) / grid_.dy;
  if (fy < 0.0 || fy > static_cast<double>(grid_.ny - 1)) return n_clad_;
  const auto j0 = std::min(static_cast<std::size_t>(fy), grid_.ny > 1 ? grid_.ny - 2 : 0);
  const double ty = grid_.ny > 1 ? fy - static_cast<double>(j0) : 0.0;
  const std::size_t j1 = std::min(j0 + 1, grid_.ny - 1);
  return (1.0 - tx) * (1.0 - ty) * at(i0, j0) + tx * (1.0 - ty) * at(i1, j0) +
         (1.0 - tx) * ty * at(i0, j1) + tx * ty * at(i1, j1);
}

RIProfile RIProfile::padded(std::size_t extra_x, std::size_t extra_y) const {
  if (grid_.is_1d()) extra_y = 0;
  const Grid g = grid_.padded(extra_x, extra_y);
  std::vector<double> out(g.size(), n_clad_);
  for (std::size_t j = 0; j < grid_.ny; ++j)
    for (std::size_t i = 0; i < grid_.nx; ++i) out[g.index(i + extra_x, j + extra_y)] = at(i, j);
  return RIProfile(g, n_clad_, std::move(out));
}

std::pair<double, double> RIProfile::cladding_margin(double tol) const {
  std::size_t imin = grid_.nx, imax = 0, jmin = grid_.ny, jmax = 0;
  for (std::size_t j = 0; j < grid_.ny; ++j)
    for (std::size_t i = 0; i < grid_.nx; ++i)
      if (at(i, j) > n_clad_ + tol) {
        imin = std::min(imin, i);
        imax = std::max(imax, i);
        jmin = std::min(jmin, j);
        jmax = std::max(jmax, j);
      }
  if (imin > imax) {
    return {grid_.dx * static_cast<double>(grid_.nx - 1), grid_.is_1d() ? 0.0 : grid_.dy * static_cast<double>(grid_.ny - 1)};
  }
  const double mx = grid_.dx * static_cast<double>(std::min(imin, grid_.nx - 1 - imax));
  const double my = grid_.is_1d() ? 0.0 : grid_.dy * static_cast<double>(std::min(jmin, grid_.ny - 1 - jmax));
  return {mx, my};
}

double interp_uniform(std::span<const double> values, double x0, double dx, double x, double outside) {
  const double f = (x - x0) / dx;
  const double last = static_cast<double>(values.size() - 1);
  if (values.empty() || f < 0.0 || f > last) return outside;
  if (values.size() == 1) return values[0];
  const auto i0 = std::min(static_cast<std::size_t>(f), values.size() - 2);
  const double t = f - static_cast<double>(i0);
  return (1.0 - t) * values[i0] + t * values[i0 + 1];
}

}  // namespace ionaddr
