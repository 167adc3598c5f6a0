#include "ionaddr/ion_chain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <numeric>

#include "ionaddr/errors.hpp"

namespace ionaddr {

void AxialPotential::validate() const {
  if (!std::isfinite(alpha2_ev_per_um2) || !std::isfinite(alpha4_ev_per_um4))
    throw DomainError("AxialPotential: coefficients must be finite");
  if (alpha4_ev_per_um4 < 0.0) throw DomainError("AxialPotential: quartic coefficient must be >= 0");
  if (alpha4_ev_per_um4 == 0.0 && !(alpha2_ev_per_um2 > 0.0))
    throw DomainError("AxialPotential: potential is not confining");
}

double AxialPotential::length_scale_um() const {
  if (alpha2_ev_per_um2 != 0.0) return std::cbrt(kCoulombEvUm / std::abs(alpha2_ev_per_um2));
  return std::pow(kCoulombEvUm / alpha4_ev_per_um4, 0.2);
}

AxialPotential AxialPotential::stretched(double factor) const {
  return {alpha2_ev_per_um2 / (factor * factor * factor), alpha4_ev_per_um4 / std::pow(factor, 5.0)};
}

namespace {

/// Energy in Coulomb units: sum a2 x^2/2 + a4 x^4/4 + sum_{i<j} 1/|x_i - x_j|.
struct Dimless {
  double a2 = 1.0;
  double a4 = 0.0;

  double energy(const Eigen::VectorXd& x) const {
    double e = 0.0;
    const auto n = x.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = x(i) * x(i);
      e += 0.5 * a2 * v + 0.25 * a4 * v * v;
      for (Eigen::Index j = i + 1; j < n; ++j) e += 1.0 / std::abs(x(j) - x(i));
    }
    return e;
  }

  void gradient_hessian(const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& h) const {
    const auto n = x.size();
    g.setZero(n);
    h.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      g(i) = a2 * x(i) + a4 * x(i) * x(i) * x(i);
      h(i, i) = a2 + 3.0 * a4 * x(i) * x(i);
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = x(j) - x(i);
        const double ad = std::abs(d);
        const double f = 1.0 / (ad * ad);
        const double s = d > 0.0 ? 1.0 : -1.0;
        // dE/dx_i of 1/|x_j - x_i| is +sign(d)/d^2.
        g(i) += s * f;
        g(j) -= s * f;
        const double k = 2.0 / (ad * ad * ad);
        h(i, i) += k;
        h(j, j) += k;
        h(i, j) -= k;
        h(j, i) -= k;
      }
  }
};

bool ordered(const Eigen::VectorXd& x) {
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (!(x(i) > x(i - 1))) return false;
  return true;
}

struct Solved {
  Eigen::VectorXd x;
  double gnorm = 0.0;
  int iterations = 0;
};

Solved solve_dimless(int n, const Dimless& p) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = i - 0.5 * (n - 1);
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  constexpr int kMaxIter = 10000;
  int it = 0;
  double e = p.energy(x);
  for (; it < kMaxIter; ++it) {
    p.gradient_hessian(x, g, h);
    if (g.norm() < 1e-10) break;
    Eigen::VectorXd step;
    double shift = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd hs = h;
      hs.diagonal().array() += shift;
      Eigen::LLT<Eigen::MatrixXd> llt(hs);
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(g);
        break;
      }
      shift = shift == 0.0 ? 1e-8 * (1.0 + h.diagonal().cwiseAbs().maxCoeff()) : 10.0 * shift;
    }
    if (step.size() == 0) step = -g;
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * step;
      if (!ordered(trial)) continue;
      const double et = p.energy(trial);
      if (et <= e + 1e-14 * std::abs(e)) {
        x = trial;
        e = et;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  p.gradient_hessian(x, g, h);
  Solved s{x, g.norm(), it};
  if (!(s.gnorm < 1e-10))
    throw ConvergenceError("equilibrium_positions: gradient did not reach 1e-10", s.gnorm, it);
  return s;
}

double relative_rms_of(const Eigen::VectorXd& x) {
  const auto n = x.size();
  if (n < 3) return 0.0;
  double mean = (x(n - 1) - x(0)) / static_cast<double>(n - 1);
  double s = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d = x(i) - x(i - 1) - mean;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(n - 1)) / mean;
}

}  // namespace

double spacing_relative_rms(std::span<const double> positions_um) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(positions_um.size()));
  for (std::size_t i = 0; i < positions_um.size(); ++i) x(static_cast<Eigen::Index>(i)) = positions_um[i];
  return relative_rms_of(x);
}

ChainConfig equilibrium_positions(int n, const AxialPotential& pot) {
  if (n < 1) throw DomainError("equilibrium_positions: need at least one ion");
  pot.validate();
  const double u = pot.length_scale_um();
  const Dimless d{pot.alpha2_ev_per_um2 * u * u * u / kCoulombEvUm, pot.alpha4_ev_per_um4 * std::pow(u, 5.0) / kCoulombEvUm};
  const Solved s = solve_dimless(n, d);
  ChainConfig c;
  c.iterations = s.iterations;
  c.gradient_norm = s.gnorm;
  for (int i = 0; i < n; ++i) {
    c.dimensionless.push_back(s.x(i));
    c.positions_um.push_back(u * s.x(i));
  }
  for (int i = 1; i < n; ++i) c.spacings_um.push_back(c.positions_um[i] - c.positions_um[i - 1]);
  if (n > 1) c.mean_spacing_um = (c.positions_um.back() - c.positions_um.front()) / (n - 1);
  c.relative_rms = relative_rms_of(s.x);
  return c;
}

namespace {

double golden_minimize(const std::function<double(double)>& f, double lo, double hi, double tol, double& fbest) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  if (fc < fd) {
    fbest = fc;
    return c;
  }
  fbest = fd;
  return d;
}

}  // namespace

UniformDesign design_uniform_spacing(int n, double target_spacing_um, bool allow_quartic) {
  if (n < 3) throw DomainError("design_uniform_spacing: need at least three ions");
  if (!(target_spacing_um > 0.0)) throw DomainError("design_uniform_spacing: target spacing must be positive");

  auto objective = [n](double a2, double a4) {
    if (a4 < 0.0 || (a4 == 0.0 && !(a2 > 0.0))) return std::numeric_limits<double>::infinity();
    try {
      return relative_rms_of(solve_dimless(n, {a2, a4}).x);
    } catch (const ConvergenceError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto mean_spacing = [n](double a2, double a4) {
    const auto x = solve_dimless(n, {a2, a4}).x;
    return (x(n - 1) - x(0)) / (n - 1);
  };
  // Stretch (a2, a4) so the chain has unit mean spacing; keeps brackets stable.
  auto normalize = [&](double& a2, double& a4) {
    const double s = mean_spacing(a2, a4);
    a2 *= s * s * s;
    a4 *= std::pow(s, 5.0);
  };

  double a2 = 1.0, a4 = 0.0;
  normalize(a2, a4);
  const double a2h = a2;
  const double half_len = 0.5 * (n - 1);
  double best = objective(a2, a4);
  int sweeps = 0;
  if (allow_quartic) {
    for (; sweeps < 100; ++sweeps) {
      const double before = best;
      double f = 0.0;
      const double q = golden_minimize([&](double t) { return objective(a2, t); }, 0.0, 4.0 * a2h / (half_len * half_len),
                                       1e-7 * a2h / (half_len * half_len), f);
      if (f < best) {
        a4 = q;
        best = f;
        normalize(a2, a4);
      }
      const double p = golden_minimize([&](double t) { return objective(t, a4); }, -2.0 * a2h, 2.0 * a2h, 1e-7 * a2h, f);
      if (f < best) {
        a2 = p;
        best = f;
        normalize(a2, a4);
      }
      if (!(best < before - 1e-12 * std::max(before, 1e-300))) break;
    }
  }

  // Physical length unit so the mean spacing hits the target.
  const double u = target_spacing_um / mean_spacing(a2, a4);
  UniformDesign out;
  out.sweeps = sweeps;
  out.potential = {a2 * kCoulombEvUm / (u * u * u), a4 * kCoulombEvUm / std::pow(u, 5.0)};
  out.chain = equilibrium_positions(n, out.potential);
  double h2 = 1.0, h4 = 0.0;
  normalize(h2, h4);
  const double uh = target_spacing_um / mean_spacing(h2, h4);
  out.harmonic = equilibrium_positions(n, {h2 * kCoulombEvUm / (uh * uh * uh), 0.0});
  return out;
}

BeamMap relay_map(std::span<const double> chip_positions_um, std::span<const double> chip_waists_um,
                  const RelayOptions& opts) {
  if (!(opts.magnification > 0.0)) throw DomainError("relay_map: magnification must be positive");
  if (chip_positions_um.size() != chip_waists_um.size())
    throw DomainError("relay_map: positions and waists differ in length");
  BeamMap m;
  for (std::size_t i = 0; i < chip_positions_um.size(); ++i) {
    m.positions_um.push_back(opts.magnification * chip_positions_um[i]);
    const double ideal = std::max(opts.magnification * chip_waists_um[i], opts.diffraction_floor_um);
    m.ideal_waists_um.push_back(ideal);
    m.waists_um.push_back(std::hypot(ideal, opts.blur_um));
  }
  return m;
}

}  // namespace ionaddr
