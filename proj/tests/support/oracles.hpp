#pragma once

// Closed-form references used by the unit and acceptance tests. Nothing here
// calls into the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kBesselJ0Zero = 2.404825557695773;

inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  if (flo * f(hi) > 0.0) throw std::runtime_error("bisect: root not bracketed");
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Even (order 0, 2, ...) or odd guided mode of a symmetric step slab of full
/// width d, scalar wave equation.
inline double slab_neff(double width, double n_core, double n_clad, double lambda, int order) {
  const double k0 = 2.0 * kPi / lambda, a = 0.5 * width;
  const double v = k0 * a * std::sqrt(n_core * n_core - n_clad * n_clad);
  const double lo = order * 0.5 * kPi, hi = std::min(v, (order + 1) * 0.5 * kPi);
  if (lo >= v) throw std::runtime_error("slab_neff: mode not guided");
  auto f = [&](double u) {
    const double w = std::sqrt(std::max(0.0, v * v - u * u));
    return order % 2 == 0 ? u * std::sin(u) - w * std::cos(u) : -u * std::cos(u) - w * std::sin(u);
  };
  const double u = bisect(f, lo + 1e-14, hi - 1e-14);
  return std::sqrt(n_core * n_core - std::pow(u / (k0 * a), 2));
}

/// LP01 of a circular step core of diameter d.
inline double lp01_neff(double diameter, double n_core, double n_clad, double lambda) {
  const double k0 = 2.0 * kPi / lambda, a = 0.5 * diameter;
  const double v = k0 * a * std::sqrt(n_core * n_core - n_clad * n_clad);
  auto f = [&](double u) {
    const double w = std::sqrt(v * v - u * u);
    return u * std::cyl_bessel_j(1.0, u) * std::cyl_bessel_k(0.0, w) -
           w * std::cyl_bessel_k(1.0, w) * std::cyl_bessel_j(0.0, u);
  };
  const double u = bisect(f, 1e-9, std::min(v, kBesselJ0Zero) * (1.0 - 1e-12));
  return std::sqrt(n_core * n_core - std::pow(u / (k0 * a), 2));
}

inline double v_number(double diameter, double n_core, double n_clad, double lambda) {
  return kPi * diameter * std::sqrt(n_core * n_core - n_clad * n_clad) / lambda;
}

/// Diameter at which V reaches the first zero of J0.
inline double single_mode_diameter(double contrast, double n_clad, double lambda) {
  const double n_core = n_clad + contrast;
  return kBesselJ0Zero * lambda / (kPi * std::sqrt(n_core * n_core - n_clad * n_clad));
}

/// Power coupling of co-centred circular Gaussians with 1/e^2 intensity radii w1, w2.
inline double gaussian_mismatch(double w1, double w2) { return std::pow(2.0 * w1 * w2 / (w1 * w1 + w2 * w2), 2); }

/// Power coupling of identical circular Gaussians offset by d.
inline double gaussian_offset(double d, double w) { return std::exp(-(d * d) / (w * w)); }

inline double gaussian_beam_width(double w0, double z, double lambda, double n) {
  const double zr = kPi * n * w0 * w0 / lambda;
  return w0 * std::sqrt(1.0 + (z / zr) * (z / zr));
}

/// Dimensionless Coulomb + harmonic energy sum x^2 / 2 + sum_{i<j} 1 / |xi - xj|.
inline double chain_energy(const std::vector<double>& x, double a2 = 1.0, double a4 = 0.0) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e += 0.5 * a2 * x[i] * x[i] + 0.25 * a4 * std::pow(x[i], 4);
    for (std::size_t j = i + 1; j < x.size(); ++j) e += 1.0 / std::abs(x[i] - x[j]);
  }
  return e;
}

/// Symmetric three-ion chain (-a, 0, a): minimizes energy over a by a dense grid then golden section.
inline double three_ion_grid_minimum() {
  auto e = [](double a) { return chain_energy({-a, 0.0, a}); };
  double best = 0.1, be = e(best);
  for (double a = 0.1; a < 3.0; a += 1e-3)
    if (e(a) < be) {
      be = e(a);
      best = a;
    }
  double lo = best - 1e-3, hi = best + 1e-3;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int i = 0; i < 200; ++i) {
    const double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    if (e(c) < e(d))
      hi = d;
    else
      lo = c;
  }
  return 0.5 * (lo + hi);
}

/// Probability of |1> after the standard Ramsey probe with accumulated phase theta.
inline double ramsey_p1(double theta, double phi) { return 0.5 * (1.0 + std::cos(theta + phi)); }

/// Nearest-neighbour pi-pulse error of the sin^2 model.
inline double rotation_error(double ratio) { return std::pow(std::sin(0.5 * kPi * ratio), 2); }

}  // namespace oracle
