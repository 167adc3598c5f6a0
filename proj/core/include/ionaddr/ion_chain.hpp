#pragma once

#include <span>
#include <vector>

namespace ionaddr {

/// e^2 / (4 pi eps0) in eV um.
inline constexpr double kCoulombEvUm = 1.439964e-3;

/// Axial trap potential V(x) = alpha2 x^2 / 2 + alpha4 x^4 / 4 per ion, in eV
/// with x in um. alpha4 >= 0; alpha2 > 0 whenever alpha4 == 0.
struct AxialPotential {
  double alpha2_ev_per_um2 = 0.0;
  double alpha4_ev_per_um4 = 0.0;

  void validate() const;
  /// (C / alpha2)^(1/3), or (C / alpha4)^(1/5) for a pure quartic well.
  double length_scale_um() const;
  /// Rescaled so the same chain shape is stretched by `factor`.
  AxialPotential stretched(double factor) const;
};

struct ChainConfig {
  std::vector<double> positions_um;
  /// Positions in units of length_scale_um().
  std::vector<double> dimensionless;
  std::vector<double> spacings_um;
  double mean_spacing_um = 0.0;
  /// RMS deviation of the spacings from their mean, divided by the mean.
  double relative_rms = 0.0;
  /// Dimensionless gradient norm at the returned configuration.
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// Ordered equilibrium of n ions by damped Newton on the total energy.
/// Throws ConvergenceError if the gradient does not reach 1e-10.
ChainConfig equilibrium_positions(int n, const AxialPotential& pot);

/// Relative RMS spacing deviation of a sorted position list.
double spacing_relative_rms(std::span<const double> positions_um);

struct UniformDesign {
  AxialPotential potential;
  ChainConfig chain;
  /// Harmonic chain with the same mean spacing, for comparison.
  ChainConfig harmonic;
  int sweeps = 0;
};

/// Quadratic + quartic potential whose chain has mean spacing `target_um` and
/// spacings as even as the search finds. Coordinate descent with golden-section
/// line searches over the dimensionless coefficients, started from a pure
/// harmonic well; only strict improvements are kept.
UniformDesign design_uniform_spacing(int n, double target_spacing_um, bool allow_quartic = true);

struct RelayOptions {
  double magnification = 0.5;
  /// Smallest waist the objective can form, um.
  double diffraction_floor_um = 0.532;
  /// Added in quadrature after the floor (aberrations); maps a floor-limited
  /// 0.532 um waist to 0.67 um.
  double blur_um = 0.40727;
};

struct BeamMap {
  std::vector<double> positions_um;
  /// max(m w, floor), before the blur.
  std::vector<double> ideal_waists_um;
  std::vector<double> waists_um;
};

/// Chip-facet beams imaged onto the ion plane.
BeamMap relay_map(std::span<const double> chip_positions_um, std::span<const double> chip_waists_um,
                  const RelayOptions& opts = {});

}  // namespace ionaddr
