#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ionaddr {

/// Uniform rectangular sampling lattice in micrometres.
///
/// Samples are stored row-major with x running fastest. A lattice with
/// ny == 1 is one-dimensional; its y fields are then ignored.
struct Grid {
  double x0 = 0.0;
  double dx = 0.05;
  std::size_t nx = 1;
  double y0 = 0.0;
  double dy = 0.05;
  std::size_t ny = 1;

  bool is_1d() const noexcept { return ny == 1; }
  std::size_t size() const noexcept { return nx * ny; }
  double x(std::size_t i) const noexcept { return x0 + dx * static_cast<double>(i); }
  double y(std::size_t j) const noexcept { return y0 + dy * static_cast<double>(j); }
  double x_max() const noexcept { return x(nx - 1); }
  double y_max() const noexcept { return y(ny - 1); }
  std::size_t index(std::size_t i, std::size_t j) const noexcept { return j * nx + i; }
  /// Area (2D) or length (1D) element of one sample.
  double cell() const noexcept { return is_1d() ? dx : dx * dy; }

  /// Odd sample count, symmetric about zero, so x = 0 is a lattice point.
  static Grid centered_1d(double half_width_um, double dx_um);
  static Grid centered_2d(double half_x_um, double half_y_um, double dx_um, double dy_um);

  /// Same spacing, grown by a whole number of samples on every side.
  Grid padded(std::size_t extra_x, std::size_t extra_y) const;

  bool same_lattice(const Grid& other) const noexcept;
  void validate() const;
};

/// Refractive-index samples on a lattice, together with the cladding index
/// that every sample is bounded below by.
class RIProfile {
 public:
  RIProfile(Grid grid, double n_clad, std::vector<double> samples);

  static RIProfile uniform(const Grid& grid, double n_clad);

  const Grid& grid() const noexcept { return grid_; }
  double n_clad() const noexcept { return n_clad_; }
  std::span<const double> samples() const noexcept { return samples_; }
  double at(std::size_t i, std::size_t j = 0) const noexcept { return samples_[grid_.index(i, j)]; }
  double peak() const;
  bool is_uniform(double tol = 1e-15) const;

  /// Bilinear interpolation; cladding outside the lattice.
  double sample(double x, double y = 0.0) const;

  /// Extends the lattice with cladding by the given number of samples per side.
  RIProfile padded(std::size_t extra_x, std::size_t extra_y) const;

  /// Distance from the outermost non-cladding sample to the lattice edge,
  /// per axis (x, y). Returns the full extent when the profile is uniform.
  std::pair<double, double> cladding_margin(double tol = 1e-12) const;

 private:
  Grid grid_;
  double n_clad_;
  std::vector<double> samples_;
};

/// Linear interpolation on uniformly spaced samples; `outside` beyond the ends.
double interp_uniform(std::span<const double> values, double x0, double dx, double x, double outside);

}  // namespace ionaddr
