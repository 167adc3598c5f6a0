#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/grid.hpp"
#include "ionaddr/mode_solver.hpp"

namespace ionaddr {

/// Fills `n` (one sample per transverse lattice point) with the index at z.
/// The vector keeps its contents between calls, so a callback may update it
/// incrementally. Values below the cladding index are allowed (bent guides).
using IndexFunction = std::function<void(double z_um, std::vector<double>& n)>;

/// Called with the current z and field after every `observe_stride` steps.
using FieldObserver = std::function<void(double z_um, std::span<const Complex> field)>;

struct BpmOptions {
  double dz_um = 0.25;
  /// Quartic absorbing strip at both transverse edges.
  bool absorber = true;
  double absorber_width_um = 5.0;
  /// Field attenuation rate at the outer wall, per um of propagation.
  double absorber_strength = 6.0;
  /// Reference index; zero selects the cladding index.
  double n_ref = 0.0;
  std::size_t history_stride = 1;
  std::size_t observe_stride = 0;
  FieldObserver observer;
};

struct PropagationResult {
  Grid grid;
  std::vector<Complex> field;
  std::vector<double> z_um;
  /// Power relative to the launched power.
  std::vector<double> power_history;
  std::vector<double> per_channel_power;
};

/// Paraxial scalar BPM over (x, z). Each step is a Strang split: half a
/// Crank-Nicolson diffraction step, the index phase exp(i k0 (n - n_ref) dz)
/// at the step midpoint, the other diffraction half-step, then the absorber.
/// Throws DomainError for dz > 1 um, for a phase step above pi/4, or for
/// absorbing strips narrower than 5 um.
PropagationResult propagate(const Grid& grid, double n_clad, const IndexFunction& index, std::vector<Complex> input,
                            double wavelength_um, double length_um, const BpmOptions& opts = {});

/// z-invariant profile.
PropagationResult propagate(const RIProfile& profile, std::vector<Complex> input, double wavelength_um,
                            double length_um, const BpmOptions& opts = {});

double field_power(const Grid& grid, std::span<const Complex> u);
/// sum conj(a) b dx.
Complex inner_product(const Grid& grid, std::span<const Complex> a, std::span<const Complex> b);
/// |<a, b>|^2 / (|a|^2 |b|^2).
double power_overlap(const Grid& grid, std::span<const Complex> a, std::span<const Complex> b);

/// Samples a 1D mode shifted by `x_shift` onto a lattice and renormalizes it.
std::vector<Complex> place_mode(const ModeField& m, const Grid& grid, double x_shift = 0.0);

/// Effective-index increment of one channel on a local lattice centred at x = 0.
struct GuideProfile {
  Grid grid;
  double n_clad = 1.51;
  std::vector<double> delta;

  /// Increment at x (zero outside the local lattice).
  double at(double x) const;
  double half_width() const noexcept { return 0.5 * (grid.x_max() - grid.x0); }
};

/// Reduces a channel cross-section to a 1D effective-index increment. The
/// local lattice spans +/- half_width_um (zero: scan extent + 5 sigma).
GuideProfile reduce_guide(const ChannelCrossSection& cs, double wavelength_um, double dx_um = 0.05,
                          double half_width_um = 0.0);

/// Default half-width used by reduce_guide.
double guide_half_width(const ChannelCrossSection& cs);

/// Convex combination (1 - t) a + t b of two profiles on the same lattice.
GuideProfile blend(const GuideProfile& a, const GuideProfile& b, double t);

/// One guide (or several) sampled onto a lattice.
RIProfile place_guides(const GuideProfile& g, const Grid& grid, std::span<const double> centers);

/// Fundamental 1D mode of a guide, on a lattice of its own.
ModeField guide_fundamental(const GuideProfile& g, double wavelength_um, int* mode_count = nullptr);

struct CouplerOptions {
  double dx_um = 0.05;
  /// Cladding kept beyond each guide centre, including the absorbers.
  double margin_um = 15.0;
  BpmOptions bpm;
  /// Reverse direction: launch in the right guide, project on the left.
  bool reverse = false;
};

struct CouplerTrace {
  std::vector<double> z_um;
  /// Power fraction in the neighbour's fundamental mode along z.
  std::vector<double> transfer;
  double crosstalk = 0.0;
  /// Supermode splitting n_even - n_odd of the pair (NaN when the pair has one mode).
  double supermode_splitting = 0.0;
};

/// Two identical guides at +/- pitch/2. The left guide's fundamental is
/// launched and the field projected onto the right guide's fundamental (its
/// mirror image) after `length_um`. Throws DomainError if the reduced guide
/// carries more than one mode.
CouplerTrace coupler_trace(const ChannelCrossSection& cs, double pitch_um, double length_um, double wavelength_um,
                           const CouplerOptions& opts = {}, std::size_t samples = 0);

double coupler_crosstalk(const ChannelCrossSection& cs, double pitch_um, double length_um, double wavelength_um,
                         const CouplerOptions& opts = {});

struct TaperOptions {
  double dx_um = 0.05;
  double margin_um = 12.0;
  /// Reduced profiles are computed at this many z stations and interpolated linearly.
  int profile_samples = 45;
  BpmOptions bpm;
};

/// Power fraction of the input fundamental that ends in the output fundamental.
double taper_transmission(const TaperSpec& t, double wavelength_um, const TaperOptions& opts = {});

struct BendOptions {
  double dx_um = 0.05;
  double margin_um = 15.0;
  BpmOptions bpm;
};

/// Constant-radius bend via the conformal map n(x) (1 + x / R); the straight
/// fundamental is launched and the surviving power in it reported. An infinite
/// radius gives the straight guide.
double bend_transmission(const ChannelCrossSection& cs, double radius_um, double arc_length_um, double wavelength_um,
                         const BendOptions& opts = {});

struct ChipDesign {
  ChannelCrossSection input_cs;
  ChannelCrossSection output_cs;
  TaperInterpolation interpolation = TaperInterpolation::linear;
};

ChipDesign spim_chip_design();
ChipDesign conventional_chip_design();

struct ChipScanOptions {
  double dx_um = 0.05;
  double margin_um = 15.0;
  int profile_samples = 45;
  BpmOptions bpm;
};

struct ChipScanResult {
  int injected = 0;
  std::vector<double> channel_x_out_um;
  /// Power in each channel's output fundamental, relative to the launch.
  std::vector<double> mode_power;
  /// mode_power normalized to the injected channel.
  std::vector<double> mode_ratio;
  /// |u|^2 at each channel centre over |u|^2 at the injected centre.
  std::vector<double> peak_ratio;
  std::vector<int> neighbours;
  Grid grid;
  std::vector<double> line_intensity;
  std::vector<double> z_um;
  std::vector<double> power_history;
};

/// Whole-chip scan: input taper over the straight input region, raised-cosine
/// routing, straight output; one channel is excited with its input fundamental.
ChipScanResult chip_crosstalk_scan(const ChipLayout& layout, const ChipDesign& design, int injected,
                                   double wavelength_um, const ChipScanOptions& opts = {});

}  // namespace ionaddr
