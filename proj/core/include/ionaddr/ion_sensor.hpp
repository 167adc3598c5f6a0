#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ionaddr/errors.hpp"
#include "ionaddr/measurement_analysis.hpp"

namespace ionaddr {

using Complex = std::complex<double>;

struct QubitState {
  Complex a0{1.0, 0.0};
  Complex a1{0.0, 0.0};

  double norm() const { return std::sqrt(std::norm(a0) + std::norm(a1)); }
};

/// exp(-i angle/2 (cos(phase) sx + sin(phase) sy)).
QubitState apply_rotation(const QubitState& s, double angle, double phase);

/// Phase exp(-i delta t) on |1>.
QubitState free_evolve(const QubitState& s, double duration_us, double delta_rad_per_us);

/// Excited-state probability after the analysis pulse R(pi/2, phi). For the
/// probe state R(pi/2, 0)|0> carrying Stark phase theta this is
/// (1 + cos(theta + phi)) / 2.
double measure(const QubitState& s, double phi);

enum class PulseKind { rotation, stark_window, delay };

struct Pulse {
  PulseKind kind = PulseKind::rotation;
  double angle = 0.0;
  double phase = 0.0;
  double duration_us = 0.0;

  static Pulse rotation(double angle, double phase) { return {PulseKind::rotation, angle, phase, 0.0}; }
  static Pulse stark(double t) { return {PulseKind::stark_window, 0.0, 0.0, t}; }
  static Pulse delay(double t) { return {PulseKind::delay, 0.0, 0.0, t}; }
};

enum class SequenceMode { automatic, spin_echo, kdd, ramsey };

struct RPEConfig {
  double tau0_us = 1.0;
  int generations = 8;
  /// Longest free interval between refocusing pulses.
  double max_gap_us = 500.0;
  SequenceMode mode = SequenceMode::automatic;
  /// Generations with c^2 + s^2 below this are reported as decohered.
  double decoherence_threshold = 0.05;

  void validate() const;
};

/// Body of the probe sequence, between the preparation pulse R(pi/2, 0) and the
/// analysis pulse. Automatic mode uses a spin echo when tau < max_gap, else a
/// KDD train of 5 nb pulses (nb even, smallest with gaps <= max_gap). Stark
/// windows occupy the gaps followed by an even number of pi pulses, so the
/// Stark phase adds coherently while static detuning cancels.
std::vector<Pulse> build_sequence(double tau532_us, const RPEConfig& cfg, SequenceMode mode = SequenceMode::automatic);

/// Number of pi rotations in a sequence.
int count_pi_pulses(std::span<const Pulse> seq);
double sequence_duration_us(std::span<const Pulse> seq);
/// Longest run of free evolution between two rotations (ends included).
double longest_gap_us(std::span<const Pulse> seq);

/// Prepares R(pi/2, 0)|0>, runs the body with the Stark shift on in stark
/// windows and `delta_noise` everywhere, and returns the state before analysis.
QubitState run_probe(std::span<const Pulse> seq, double delta_stark, double delta_noise);

struct NoiseModel {
  /// Quasi-static detuning, resampled every shot (rad/us).
  double sigma_rad_per_us = 0.0;
  int shots = 100;
  std::uint64_t seed = 0;
  /// Infinite shots: probabilities are returned exactly.
  bool exact = false;
  /// Symmetric readout error: p -> e + (1 - 2e) p.
  double readout_error = 0.0;

  void validate() const;
};

/// Estimated p1 for generation k at analysis phase phi, already expressed in
/// the frame where p1 = (1 + cos(delta tau_k + phi)) / 2.
using PhaseOracle = std::function<double(int k, double phi)>;

/// Probe simulation for a constant Stark shift. The reference phase and sign
/// of each sequence are taken from noiseless runs and folded into the analysis
/// phase. `stream` decorrelates oracles that share a noise seed.
PhaseOracle stark_oracle(double delta_rad_per_us, const RPEConfig& cfg, const NoiseModel& noise,
                         std::uint64_t stream = 0);

struct RpeGeneration {
  int k = 0;
  double tau_us = 0.0;
  double c = 0.0;
  double s = 0.0;
  double theta = 0.0;
  double delta_hat = 0.0;
};

struct RpeResult {
  double delta_hat = 0.0;
  std::vector<RpeGeneration> trace;
};

class DecoheredError : public Error {
 public:
  DecoheredError(const std::string& what, std::vector<RpeGeneration> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<RpeGeneration>& trace() const noexcept { return trace_; }

 private:
  std::vector<RpeGeneration> trace_;
};

/// Robust phase estimation over generations tau_k = 2^k tau0. The first
/// generation's phase is read in [-pi/2, 3pi/2); later ones pick the branch
/// nearest the previous estimate.
RpeResult rpe_estimate(const PhaseOracle& oracle, const RPEConfig& cfg);

/// Ion-plane intensity pattern of one channel: its own Gaussian beam plus
/// leakage of relative strength `leakage` centred on each nearest neighbour.
struct IonPlaneBeams {
  std::vector<double> centers_um;
  std::vector<double> waists_um;
  std::vector<double> peaks;
  double leakage = 0.0;

  void validate() const;
  double intensity(std::size_t channel, double x_um) const;
};

struct ScanOptions {
  /// Stark shift per unit intensity (rad/us).
  double stark_per_intensity = 1.0;
  RPEConfig rpe;
  /// Upper bound on the adaptive tau0, as a multiple of rpe.tau0_us.
  double max_tau0_factor = 1e4;
  /// Points within this distance of a channel's fitted centre enter its fit (0: half the pitch).
  double fit_half_window_um = 0.0;
};

struct ChannelScan {
  std::vector<double> delta_hat;
  std::vector<double> uncertainty;
  std::vector<double> normalized;
  std::vector<std::uint8_t> valid;
  GaussFit fit;
  /// Normalized signal at the two nearest neighbours' centres (NaN at chain edges).
  std::array<double, 2> neighbour_ratio{};
};

struct ScanMeasurement {
  std::vector<double> positions_um;
  std::vector<ChannelScan> channels;
  double mean_waist_um = 0.0;
  double mean_pitch_um = 0.0;
  double mean_neighbour_ratio = 0.0;
};

/// Shuttles the ion over `positions_um` with each channel switched on in turn.
/// At every point a short pilot estimate sets tau0 so that delta tau0 stays
/// near pi/2, then a full RPE run gives the Stark shift. Each channel is
/// normalized to its own maximum and fitted with one Gaussian.
ScanMeasurement scan_ion(const IonPlaneBeams& beams, std::span<const double> positions_um, const ScanOptions& opts,
                         const NoiseModel& noise);

enum class AddressingMode { single_global, both_addressed };

/// sin^2(pi r / 2) with r = sqrt(eps) (single_global) or eps (both_addressed).
double neighbour_rotation_error(double eps, AddressingMode mode);

/// Per channel, summed over its nearest neighbours; crosstalk[i] holds the
/// (left, right) leakage of channel i (edge entries are ignored).
std::vector<double> neighbor_error(std::span<const std::array<double, 2>> crosstalk, AddressingMode mode);

}  // namespace ionaddr
