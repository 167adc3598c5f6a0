#include "ionaddr/mode_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/errors.hpp"
#include "ionaddr/random.hpp"

namespace ionaddr {

double wavenumber(double wavelength_um) { return 2.0 * std::numbers::pi / wavelength_um; }

double ModeField::norm() const {
  double s = 0.0;
  for (const auto& v : amplitude) s += std::norm(v);
  return std::sqrt(s * grid.cell());
}

Complex ModeField::sample(double x, double y) const {
  const double fx = (x - grid.x0) / grid.dx;
  if (fx < 0.0 || fx > static_cast<double>(grid.nx - 1)) return {};
  const auto i0 = std::min(static_cast<std::size_t>(fx), grid.nx > 1 ? grid.nx - 2 : 0);
  const std::size_t i1 = std::min(i0 + 1, grid.nx - 1);
  const double tx = fx - static_cast<double>(i0);
  if (grid.is_1d()) return (1.0 - tx) * at(i0) + tx * at(i1);
  const double fy = (y - grid.y0) / grid.dy;
  if (fy < 0.0 || fy > static_cast<double>(grid.ny - 1)) return {};
  const auto j0 = std::min(static_cast<std::size_t>(fy), grid.ny > 1 ? grid.ny - 2 : 0);
  const std::size_t j1 = std::min(j0 + 1, grid.ny - 1);
  const double ty = fy - static_cast<double>(j0);
  return (1.0 - tx) * (1.0 - ty) * at(i0, j0) + tx * (1.0 - ty) * at(i1, j0) + (1.0 - tx) * ty * at(i0, j1) +
         tx * ty * at(i1, j1);
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

/// Scalar Helmholtz operator A = Laplacian + k0^2 n^2 with Dirichlet edges.
SpMat helmholtz(const RIProfile& p, double k0) {
  const Grid& g = p.grid();
  const auto n = static_cast<Eigen::Index>(g.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(n) * (g.is_1d() ? 3 : 5));
  const double cx = 1.0 / (g.dx * g.dx);
  const double cy = g.is_1d() ? 0.0 : 1.0 / (g.dy * g.dy);
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const auto r = static_cast<Eigen::Index>(g.index(i, j));
      const double ni = p.at(i, j);
      t.emplace_back(r, r, -2.0 * cx - 2.0 * cy + k0 * k0 * ni * ni);
      if (i > 0) t.emplace_back(r, r - 1, cx);
      if (i + 1 < g.nx) t.emplace_back(r, r + 1, cx);
      if (!g.is_1d()) {
        const auto nxi = static_cast<Eigen::Index>(g.nx);
        if (j > 0) t.emplace_back(r, r - nxi, cy);
        if (j + 1 < g.ny) t.emplace_back(r, r + nxi, cy);
      }
    }
  SpMat a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

/// Orthonormalizes the columns of `block` against `basis[:, :filled]` and
/// appends the survivors. Returns the number of columns appended.
int append_orthonormal(Eigen::MatrixXd& basis, Eigen::Index& filled, const Eigen::MatrixXd& block) {
  int added = 0;
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    if (filled >= basis.cols()) break;
    Eigen::VectorXd v = block.col(c);
    const double n0 = v.norm();
    if (!(n0 > 0.0)) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (filled > 0) {
        const Eigen::VectorXd h = basis.leftCols(filled).transpose() * v;
        v.noalias() -= basis.leftCols(filled) * h;
      }
    }
    const double n1 = v.norm();
    if (n1 <= 1e-10 * n0) continue;
    basis.col(filled++) = v / n1;
    ++added;
  }
  return added;
}

struct RawModes {
  std::vector<double> beta2;
  Eigen::MatrixXd vectors;
  std::vector<double> residuals;
};

RawModes shift_invert_modes(const RIProfile& p, double k0, int max_modes, const SolverOptions& opts) {
  const SpMat a = helmholtz(p, k0);
  const auto n = a.rows();
  const double nmax = p.peak();
  const double sigma = k0 * k0 * nmax * nmax;
  const double threshold = k0 * k0 * p.n_clad() * p.n_clad();

  SpMat shifted = -a;
  for (Eigen::Index r = 0; r < n; ++r) shifted.coeffRef(r, r) += sigma;
  Eigen::SimplicialLLT<SpMat> chol(shifted);
  if (chol.info() != Eigen::Success)
    throw ConvergenceError("solve_modes: shifted operator is not positive definite", 0.0, 0);

  const auto block = static_cast<Eigen::Index>(std::min<long>(n, max_modes + opts.guard_vectors));
  const int depth = std::max(1, opts.krylov_depth);

  Eigen::MatrixXd x(n, block);
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> normal;
  for (Eigen::Index c = 0; c < block; ++c)
    for (Eigen::Index r = 0; r < n; ++r) x(r, c) = normal(rng);

  std::vector<double> previous(static_cast<std::size_t>(block), 0.0);
  Eigen::VectorXd theta;
  Eigen::MatrixXd ritz;
  const Eigen::Index max_basis = std::min<Eigen::Index>(n, block * (depth + 1));
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    Eigen::MatrixXd basis(n, max_basis);
    Eigen::Index filled = 0;
    append_orthonormal(basis, filled, x);
    Eigen::Index start = 0;
    for (int d = 0; d < depth && filled < max_basis; ++d) {
      const Eigen::Index len = filled - start;
      if (len == 0) break;
      const Eigen::MatrixXd next = chol.solve(basis.middleCols(start, len));
      start = filled;
      append_orthonormal(basis, filled, next);
    }
    const auto v = basis.leftCols(filled);
    const Eigen::MatrixXd av = a * v;
    Eigen::MatrixXd h = v.transpose() * av;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    // Ascending order: the largest beta^2 sit at the end.
    const Eigen::Index keep = std::min(block, filled);
    theta.resize(keep);
    ritz.resize(n, keep);
    for (Eigen::Index k = 0; k < keep; ++k) {
      theta(k) = es.eigenvalues()(filled - 1 - k);
      ritz.col(k) = v * es.eigenvectors().col(filled - 1 - k);
    }

    int above = 0;
    while (above < keep && theta(above) > threshold) ++above;
    const Eigen::Index check = std::min<Eigen::Index>({keep, static_cast<Eigen::Index>(max_modes), above + 1});
    bool converged = it > 0;
    for (Eigen::Index k = 0; k < check && converged; ++k)
      converged = std::abs(theta(k) - previous[static_cast<std::size_t>(k)]) <= opts.tolerance * std::abs(theta(k));
    for (Eigen::Index k = 0; k < keep; ++k) previous[static_cast<std::size_t>(k)] = theta(k);
    x = ritz;
    if (converged) break;
  }

  RawModes out;
  const Eigen::Index keep = theta.size();
  out.vectors = ritz;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < keep; ++k) {
    out.beta2.push_back(theta(k));
    const Eigen::VectorXd r = a * ritz.col(k) - theta(k) * ritz.col(k);
    out.residuals.push_back(r.norm() / std::abs(theta(k)));
    if (k < max_modes) worst = std::max(worst, out.residuals.back());
  }
  if (it >= opts.max_iterations)
    throw ConvergenceError("solve_modes: shift-invert iteration did not converge (relative residual " +
                               std::to_string(worst) + ")",
                           worst, it);
  return out;
}

double boundary_ratio(const Grid& g, const std::vector<Complex>& u) {
  double peak = 0.0, edge = 0.0;
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double m = std::abs(u[g.index(i, j)]);
      peak = std::max(peak, m);
      const bool on_edge = i == 0 || i + 1 == g.nx || (!g.is_1d() && (j == 0 || j + 1 == g.ny));
      if (on_edge) edge = std::max(edge, m);
    }
  return peak > 0.0 ? edge / peak : 0.0;
}

std::vector<ModeField> solve_padded(const RIProfile& p, double wavelength_um, int max_modes,
                                    const SolverOptions& opts) {
  const double k0 = wavenumber(wavelength_um);
  const RawModes raw = shift_invert_modes(p, k0, max_modes, opts);
  std::vector<ModeField> modes;
  const Grid& g = p.grid();
  for (std::size_t k = 0; k < raw.beta2.size() && static_cast<int>(k) < max_modes; ++k) {
    const double n_eff = std::sqrt(std::max(0.0, raw.beta2[k])) / k0;
    if (!(n_eff > p.n_clad())) break;
    ModeField m;
    m.grid = g;
    m.n_eff = n_eff;
    m.wavelength_um = wavelength_um;
    m.n_clad = p.n_clad();
    m.residual = raw.residuals[k];
    const auto col = raw.vectors.col(static_cast<Eigen::Index>(k));
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    const double sign = col(imax) < 0.0 ? -1.0 : 1.0;
    const double scale = sign / (col.norm() * std::sqrt(g.cell()));
    m.amplitude.resize(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) m.amplitude[s] = col(static_cast<Eigen::Index>(s)) * scale;
    m.boundary_ratio = boundary_ratio(g, m.amplitude);
    modes.push_back(std::move(m));
  }
  return modes;
}

}  // namespace

std::vector<ModeField> solve_modes(const RIProfile& profile, double wavelength_um, int max_modes,
                                   const SolverOptions& opts) {
  if (!(wavelength_um > 0.0)) throw DomainError("solve_modes: wavelength must be positive");
  if (max_modes < 1) throw DomainError("solve_modes: max_modes must be >= 1");
  const Grid& g = profile.grid();
  if (opts.enforce_resolution) {
    const double limit = wavelength_um / 8.0 + 1e-12;
    if (g.dx > limit || (!g.is_1d() && g.dy > limit))
      throw DomainError("solve_modes: grid spacing exceeds wavelength / 8");
  }
  double padding = opts.padding_um;
  for (int attempt = 0;; ++attempt) {
    const auto [mx, my] = profile.cladding_margin();
    auto extra = [](double want, double have, double step) {
      return want > have ? static_cast<std::size_t>(std::ceil((want - have) / step - 1e-9)) : std::size_t{0};
    };
    const RIProfile padded = profile.padded(extra(padding, mx, g.dx), g.is_1d() ? 0 : extra(padding, my, g.dy));
    auto modes = solve_padded(padded, wavelength_um, max_modes, opts);
    const bool boundary_ok = std::all_of(modes.begin(), modes.end(), [&](const ModeField& m) {
      return m.boundary_ratio < opts.boundary_tolerance;
    });
    if (boundary_ok || !opts.auto_pad || attempt >= opts.max_pad_doublings) return modes;
    padding *= 2.0;
  }
}

double single_mode_cutoff(double contrast, double wavelength_um, double n_clad, const CutoffOptions& opts) {
  if (!(contrast > 0.0)) throw DomainError("single_mode_cutoff: contrast must be positive");
  const double n_core = n_clad + contrast;
  SolverOptions so;
  so.auto_pad = false;
  // Near cutoff the second mode's tail reaches the Dirichlet edge; a window
  // several core diameters wide keeps the shift of the cutoff below ~1%.
  auto count = [&](double d) {
    const double half = 0.5 * d + std::max(3.0, 3.0 * d);
    const Grid g = Grid::centered_2d(half, half, opts.dx_um, opts.dx_um);
    so.padding_um = 0.0;
    return solve_modes(circular_step_profile(d, n_core, n_clad, g), wavelength_um, 2, so).size();
  };
  double lo = 0.0, hi = 0.5;
  while (count(hi) < 2) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e3) throw DomainError("single_mode_cutoff: no multimode diameter below 1 mm");
  }
  while (hi - lo > opts.relative_tolerance * hi) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) >= 2 ? hi : lo) = mid;
  }
  return lo;
}

namespace {

double log_quadratic_crossing(const std::vector<double>& xs, const std::vector<double>& vals, std::size_t i,
                              std::size_t inner, double target) {
  // Crossing between samples `inner` (above target) and `i` (below). Fit ln I
  // with a parabola through three samples when they are available; exact for
  // Gaussian profiles.
  const std::size_t lo = std::min(i, inner), hi = std::max(i, inner);
  const double lt = std::log(target);
  auto lin = [&]() {
    const double a = std::log(std::max(vals[inner], 1e-300)), b = std::log(std::max(vals[i], 1e-300));
    return xs[inner] + (xs[i] - xs[inner]) * (a - lt) / (a - b);
  };
  std::size_t c = lo;
  if (hi + 1 < vals.size()) c = lo;
  else if (lo > 0) c = lo - 1;
  else return lin();
  const std::size_t c2 = c + 2;
  if (c2 >= vals.size()) return lin();
  for (std::size_t k = c; k <= c2; ++k)
    if (!(vals[k] > 0.0)) return lin();
  const double x0 = xs[c], x1 = xs[c + 1], x2 = xs[c2];
  const double y0 = std::log(vals[c]), y1 = std::log(vals[c + 1]), y2 = std::log(vals[c2]);
  // Newton form of the interpolating parabola.
  const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
  const double a2 = (d12 - d01) / (x2 - x0);
  const double a1 = d01 - a2 * (x0 + x1);
  const double a0 = y0 - a1 * x0 - a2 * x0 * x0;
  if (std::abs(a2) < 1e-14) return lin();
  const double disc = a1 * a1 - 4.0 * a2 * (a0 - lt);
  if (disc < 0.0) return lin();
  const double r1 = (-a1 + std::sqrt(disc)) / (2.0 * a2), r2 = (-a1 - std::sqrt(disc)) / (2.0 * a2);
  const double a = std::min(xs[i], xs[inner]), b = std::max(xs[i], xs[inner]);
  if (r1 >= a - 1e-12 && r1 <= b + 1e-12) return r1;
  if (r2 >= a - 1e-12 && r2 <= b + 1e-12) return r2;
  return lin();
}

double width_1e2(const std::vector<double>& xs, const std::vector<double>& intensity) {
  const auto it = std::max_element(intensity.begin(), intensity.end());
  if (it == intensity.end() || !(*it > 0.0)) return 0.0;
  const auto im = static_cast<std::size_t>(it - intensity.begin());
  const double target = *it * std::exp(-2.0);
  double right = xs.back(), left = xs.front();
  for (std::size_t i = im + 1; i < xs.size(); ++i)
    if (intensity[i] < target) {
      right = log_quadratic_crossing(xs, intensity, i, i - 1, target);
      break;
    }
  for (std::size_t i = im; i-- > 0;)
    if (intensity[i] < target) {
      left = log_quadratic_crossing(xs, intensity, i, i + 1, target);
      break;
    }
  return right - left;
}

}  // namespace

Mfd mfd(const ModeField& m) {
  const Grid& g = m.grid;
  double w = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double v = std::norm(m.at(i, j));
      w += v;
      cx += v * g.x(i);
      cy += v * g.y(j);
    }
  if (!(w > 0.0)) return {};
  cx /= w;
  cy /= w;
  Mfd out;
  std::vector<double> xs(g.nx), line(g.nx);
  for (std::size_t i = 0; i < g.nx; ++i) {
    xs[i] = g.x(i);
    line[i] = std::norm(g.is_1d() ? m.at(i) : m.sample(g.x(i), cy));
  }
  out.x_um = width_1e2(xs, line);
  if (!g.is_1d()) {
    std::vector<double> ys(g.ny), col(g.ny);
    for (std::size_t j = 0; j < g.ny; ++j) {
      ys[j] = g.y(j);
      col[j] = std::norm(m.sample(cx, g.y(j)));
    }
    out.y_um = width_1e2(ys, col);
  }
  return out;
}

double overlap_efficiency(const ModeField& a, const ModeField& b, double dx_um, double dy_um) {
  if (a.grid.is_1d() != b.grid.is_1d()) throw DomainError("overlap_efficiency: field dimensionalities differ");
  if (a.wavelength_um > 0.0 && b.wavelength_um > 0.0 &&
      std::abs(a.wavelength_um - b.wavelength_um) > 1e-9 * a.wavelength_um)
    throw DomainError("overlap_efficiency: fields have different wavelengths");
  const bool flat = a.grid.is_1d();
  Complex acc{};
  double na = 0.0, nb = 0.0;
  if (dx_um == 0.0 && dy_um == 0.0 && a.grid.same_lattice(b.grid)) {
    for (std::size_t s = 0; s < a.amplitude.size(); ++s) {
      acc += std::conj(a.amplitude[s]) * b.amplitude[s];
      na += std::norm(a.amplitude[s]);
      nb += std::norm(b.amplitude[s]);
    }
  } else {
    const double step_x = std::min(a.grid.dx, b.grid.dx);
    const double step_y = flat ? 1.0 : std::min(a.grid.dy, b.grid.dy);
    const double xlo = std::min(a.grid.x0 + dx_um, b.grid.x0), xhi = std::max(a.grid.x_max() + dx_um, b.grid.x_max());
    const double ylo = flat ? 0.0 : std::min(a.grid.y0 + dy_um, b.grid.y0);
    const double yhi = flat ? 0.0 : std::max(a.grid.y_max() + dy_um, b.grid.y_max());
    const auto nx = static_cast<std::size_t>(std::floor((xhi - xlo) / step_x + 1e-9)) + 1;
    const auto ny = flat ? std::size_t{1} : static_cast<std::size_t>(std::floor((yhi - ylo) / step_y + 1e-9)) + 1;
    for (std::size_t j = 0; j < ny; ++j) {
      const double y = ylo + step_y * static_cast<double>(j);
      for (std::size_t i = 0; i < nx; ++i) {
        const double x = xlo + step_x * static_cast<double>(i);
        const Complex va = a.sample(x - dx_um, y - dy_um);
        const Complex vb = b.sample(x, y);
        acc += std::conj(va) * vb;
        na += std::norm(va);
        nb += std::norm(vb);
      }
    }
  }
  if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
  return std::clamp(std::norm(acc) / (na * nb), 0.0, 1.0);
}

CouplingReport vga_coupling_mc(const ModeField& fiber_mode, const ModeField& chip_mode, double bound_x_um,
                               double bound_y_um, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw DomainError("vga_coupling_mc: n_samples must be >= 1");
  if (bound_x_um < 0.0 || bound_y_um < 0.0) throw DomainError("vga_coupling_mc: bounds must be non-negative");
  CouplingReport rep;
  rep.samples.resize(static_cast<std::size_t>(n_samples));
  for (int k = 0; k < n_samples; ++k) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto& s = rep.samples[static_cast<std::size_t>(k)];
    s.dx_um = bound_x_um * u(rng);
    s.dy_um = bound_y_um * u(rng);
    s.efficiency = overlap_efficiency(fiber_mode, chip_mode, s.dx_um, s.dy_um);
  }
  double sum = 0.0;
  rep.min_efficiency = 1.0;
  rep.max_efficiency = 0.0;
  for (const auto& s : rep.samples) {
    sum += s.efficiency;
    rep.min_efficiency = std::min(rep.min_efficiency, s.efficiency);
    rep.max_efficiency = std::max(rep.max_efficiency, s.efficiency);
  }
  rep.mean_efficiency = std::clamp(sum / n_samples, rep.min_efficiency, rep.max_efficiency);
  return rep;
}

ModeField gaussian_mode(const Grid& grid, double waist_um, double wavelength_um, double x_c, double y_c) {
  if (!(waist_um > 0.0)) throw DomainError("gaussian_mode: waist must be positive");
  ModeField m;
  m.grid = grid;
  m.wavelength_um = wavelength_um;
  m.amplitude.resize(grid.size());
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x = grid.x(i) - x_c, y = grid.is_1d() ? 0.0 : grid.y(j) - y_c;
      m.amplitude[grid.index(i, j)] = std::exp(-(x * x + y * y) / (waist_um * waist_um));
    }
  const double nrm = m.norm();
  for (auto& v : m.amplitude) v /= nrm;
  return m;
}

}  // namespace ionaddr
