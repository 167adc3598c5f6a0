#pragma once

#include <cstddef>
#include <vector>

#include "ionaddr/grid.hpp"

namespace ionaddr {

/// One laser-written index modification: a Gaussian blob
/// delta_n * exp(-(x-cx)^2 / (2 sx^2) - (y-cy)^2 / (2 sy^2)).
struct ScanSpec {
  double center_x_um = 0.0;
  double center_y_um = 0.0;
  double delta_n_peak = 0.0;
  double sigma_x_um = 0.38;
  double sigma_y_um = 0.68;

  void validate() const;
  double eval(double x, double y) const;
};

struct ChannelCrossSection {
  std::vector<ScanSpec> scans;
  double n_clad = 1.51;

  void validate() const;
  /// Index increment over cladding at a point (sum over scans).
  double delta_n(double x, double y) const;
  /// Largest composite index, found by a dense search refined locally.
  double peak_index() const;
};

enum class TaperInterpolation { linear, cosine };

struct TaperSpec {
  ChannelCrossSection input_cs;
  ChannelCrossSection output_cs;
  double length_um = 2200.0;
  TaperInterpolation interpolation = TaperInterpolation::linear;
};

/// Chip routing geometry: straight input region, raised-cosine curve, straight
/// output region. Channel i sits at (i - (n-1)/2) * pitch at either facet.
struct ChipLayout {
  int n_channels = 8;
  double input_pitch_um = 127.0;
  double output_pitch_um = 8.0;
  double len_straight_in_um = 2200.0;
  double len_curve_um = 7200.0;
  double len_straight_out_um = 200.0;

  void validate() const;
  double total_length_um() const noexcept { return len_straight_in_um + len_curve_um + len_straight_out_um; }
  /// Smallest bend radius over all channels (infinite for a single channel).
  double min_bend_radius_um() const;
};

/// Lateral position x(z) of one channel along the chip.
class ChannelPath {
 public:
  ChannelPath(double x_in_um, double x_out_um, double z_curve_start_um, double curve_len_um, double total_len_um);

  double x(double z) const;
  double slope(double z) const;
  double curvature(double z) const;
  double x_in() const noexcept { return x_in_; }
  double x_out() const noexcept { return x_out_; }
  double length() const noexcept { return total_; }
  /// Radius of curvature minimum, attained where the curve meets the straights.
  double min_bend_radius_um() const;

 private:
  double x_in_, x_out_, z0_, len_, total_;
};

ChannelPath channel_path(const ChipLayout& layout, int channel);

/// Parameters of the multiscan designs. The per-scan amplitude is solved so
/// the composite peak index equals n_core.
struct SpimDesign {
  double n_clad = 1.51;
  double n_core = 1.525;
  double core_separation_um = 0.4;
  double sigma_x_um = 0.38;
  double sigma_y_um = 0.68;
  int core_scans = 4;
  /// Scans added on each side of the core group for the input (mode-matching) design.
  int outer_scans_per_side = 1;
  double outer_spacing_factor = 1.5;
};

/// Four closely spaced scans: the output-facet channel.
ChannelCrossSection spim_output_design(const SpimDesign& d = {});
/// Output design plus wider-spaced outer scans: the input-facet channel.
ChannelCrossSection spim_input_design(const SpimDesign& d = {});

/// Single-blob waveguide written without the multiscan scheme.
struct ConventionalDesign {
  double n_clad = 1.51;
  double delta_n = 0.006;
  double sigma_x_um = 1.0;
  double sigma_y_um = 1.0;
};
ChannelCrossSection conventional_design(const ConventionalDesign& d = {});

/// Samples a cross-section on a window. Throws DomainError naming the first
/// scan whose centre +/- 4 sigma is not inside the window.
RIProfile build_cross_section(const ChannelCrossSection& cs, const Grid& window);

RIProfile conventional_cross_section(const Grid& window, const ConventionalDesign& d = {});

/// Cross-section at distance z along a taper. Scans are paired by index from
/// the centre outwards; a scan present at one end only ramps its amplitude to
/// zero at the other end.
ChannelCrossSection taper_profile(const TaperSpec& t, double z_um);

/// Collapses the vertical axis: each column is replaced by the effective index
/// of its fundamental vertical slab mode, or the cladding index when the column
/// guides nothing. Columns that do not vary in y keep their value.
RIProfile effective_index_reduce(const RIProfile& p, double wavelength_um);

/// Horizontal full width at half maximum of the index increment through the peak row.
double horizontal_fwhm_um(const RIProfile& p);
/// Horizontal second-moment width sqrt(<x^2> - <x>^2) of the index increment.
double horizontal_rms_width_um(const RIProfile& p);

/// Circular step-index core, with sub-pixel averaging of n^2 on boundary cells.
RIProfile circular_step_profile(double diameter_um, double n_core, double n_clad, const Grid& window);
/// Symmetric 1D slab core of the given width, with exact cell-averaged n^2.
RIProfile slab_step_profile(double width_um, double n_core, double n_clad, const Grid& window);

}  // namespace ionaddr
