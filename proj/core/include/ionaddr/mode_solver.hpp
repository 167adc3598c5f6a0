#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "ionaddr/grid.hpp"

namespace ionaddr {

using Complex = std::complex<double>;

/// A guided scalar mode sampled on a lattice.
///
/// The amplitude is normalized so that sum |u|^2 * cell == 1. The sign is
/// fixed so that the largest-magnitude sample is real and positive.
struct ModeField {
  Grid grid;
  std::vector<Complex> amplitude;
  double n_eff = 0.0;
  double wavelength_um = 0.0;
  double n_clad = 0.0;
  /// ||A u - beta^2 u|| / beta^2 at return.
  double residual = 0.0;
  /// Largest boundary magnitude relative to the peak magnitude.
  double boundary_ratio = 0.0;

  double norm() const;
  Complex at(std::size_t i, std::size_t j = 0) const { return amplitude[grid.index(i, j)]; }
  /// Bilinear interpolation; zero outside the lattice.
  Complex sample(double x, double y = 0.0) const;
};

struct SolverOptions {
  /// Minimum cladding margin added around the index structure (um).
  double padding_um = 3.0;
  /// Double the padding while a returned mode violates the boundary tolerance.
  bool auto_pad = true;
  int max_pad_doublings = 3;
  double boundary_tolerance = 1e-6;
  /// Relative change of beta^2 between iterations that counts as converged.
  double tolerance = 1e-10;
  int max_iterations = 10000;
  /// Extra Ritz vectors carried beyond max_modes.
  int guard_vectors = 3;
  /// Shift-inverted powers appended per iteration (Krylov depth).
  int krylov_depth = 6;
  /// Reject lattices coarser than wavelength / 8.
  bool enforce_resolution = true;
};

/// Guided modes of the scalar Helmholtz operator (3-point Laplacian in 1D,
/// 5-point in 2D, Dirichlet edges) in decreasing n_eff. Eigenpairs come from
/// block shift-invert iteration with the shift at (k0 * max n)^2, where the
/// shifted operator is positive definite. Only modes with n_eff > n_clad are
/// returned; an unguiding profile yields an empty list.
std::vector<ModeField> solve_modes(const RIProfile& profile, double wavelength_um, int max_modes,
                                   const SolverOptions& opts = {});

struct CutoffOptions {
  double dx_um = 0.05;
  /// Bisection stops when the bracket is narrower than this fraction of its upper end.
  double relative_tolerance = 1e-3;
};

/// Largest circular step-index core diameter that guides a single mode.
double single_mode_cutoff(double contrast, double wavelength_um, double n_clad, const CutoffOptions& opts = {});

struct Mfd {
  double x_um = 0.0;
  double y_um = 0.0;
};

/// 1/e^2 intensity full widths along x and y through the intensity centroid.
/// y_um is zero for one-dimensional modes.
Mfd mfd(const ModeField& m);

/// Power coupling |<a(x - dx, y - dy), b>|^2 between unit-normalized fields,
/// evaluated on a common lattice (union of both extents at the finer spacing).
double overlap_efficiency(const ModeField& a, const ModeField& b, double dx_um = 0.0, double dy_um = 0.0);

struct CouplingSample {
  double dx_um = 0.0;
  double dy_um = 0.0;
  double efficiency = 0.0;
};

struct CouplingReport {
  double mean_efficiency = 0.0;
  double min_efficiency = 0.0;
  double max_efficiency = 0.0;
  std::vector<CouplingSample> samples;
};

/// Monte Carlo over fibre-core position errors drawn uniformly in
/// [-bound_x, bound_x] x [-bound_y, bound_y]. Sample k uses its own stream
/// derived from (seed, k), so the result does not depend on evaluation order.
CouplingReport vga_coupling_mc(const ModeField& fiber_mode, const ModeField& chip_mode, double bound_x_um,
                               double bound_y_um, int n_samples, std::uint64_t seed);

/// Unit-normalized field exp(-(x^2 + y^2) / w^2) (1/e^2 intensity radius w) on a lattice.
ModeField gaussian_mode(const Grid& grid, double waist_um, double wavelength_um, double x_c = 0.0, double y_c = 0.0);

/// Wavenumber 2 pi / lambda.
double wavenumber(double wavelength_um);

}  // namespace ionaddr
