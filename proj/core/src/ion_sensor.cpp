#include "ionaddr/ion_sensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "ionaddr/random.hpp"

namespace ionaddr {

namespace {
constexpr double kPi = std::numbers::pi;
}

QubitState apply_rotation(const QubitState& s, double angle, double phase) {
  const double c = std::cos(0.5 * angle), sn = std::sin(0.5 * angle);
  const Complex off01 = Complex(0.0, -sn) * std::polar(1.0, -phase);
  const Complex off10 = Complex(0.0, -sn) * std::polar(1.0, phase);
  return {c * s.a0 + off01 * s.a1, off10 * s.a0 + c * s.a1};
}

QubitState free_evolve(const QubitState& s, double duration_us, double delta_rad_per_us) {
  if (duration_us < 0.0) throw DomainError("free_evolve: duration must be >= 0");
  return {s.a0, s.a1 * std::polar(1.0, -delta_rad_per_us * duration_us)};
}

double measure(const QubitState& s, double phi) { return std::norm(apply_rotation(s, 0.5 * kPi, phi).a1); }

void RPEConfig::validate() const {
  if (!(tau0_us > 0.0)) throw DomainError("RPEConfig: tau0 must be positive");
  if (generations < 1) throw DomainError("RPEConfig: need at least one generation");
  if (!(max_gap_us > 0.0)) throw DomainError("RPEConfig: max gap must be positive");
}

void NoiseModel::validate() const {
  if (!(sigma_rad_per_us >= 0.0)) throw DomainError("NoiseModel: sigma must be >= 0");
  if (shots < 1) throw DomainError("NoiseModel: shots must be >= 1");
  if (!(readout_error >= 0.0 && readout_error <= 0.5)) throw DomainError("NoiseModel: readout error must lie in [0, 0.5]");
}

std::vector<Pulse> build_sequence(double tau532_us, const RPEConfig& cfg, SequenceMode mode) {
  cfg.validate();
  if (!(tau532_us > 0.0)) throw DomainError("build_sequence: tau532 must be positive");
  if (mode == SequenceMode::automatic) mode = cfg.mode;
  if (mode == SequenceMode::automatic) mode = tau532_us < cfg.max_gap_us ? SequenceMode::spin_echo : SequenceMode::kdd;

  std::vector<Pulse> seq;
  switch (mode) {
    case SequenceMode::ramsey:
      seq.push_back(Pulse::stark(tau532_us));
      break;
    case SequenceMode::spin_echo:
      seq = {Pulse::delay(tau532_us), Pulse::rotation(kPi, 0.0), Pulse::stark(tau532_us)};
      break;
    default: {
      // M = 5 nb pulses spaced tau_g = 2 tau / M, half gaps at both ends.
      int nb = 2;
      while (2.0 * tau532_us / (5.0 * nb) > cfg.max_gap_us) nb += 2;
      const int m = 5 * nb;
      const double tg = 2.0 * tau532_us / m;
      static constexpr double kKnill[5] = {kPi / 6.0, 0.0, kPi / 2.0, 0.0, kPi / 6.0};
      auto gap = [&](int j, double len) {
        // Gap j is followed by m - j pulses; even counts keep the Stark sign.
        seq.push_back((m - j) % 2 == 0 ? Pulse::stark(len) : Pulse::delay(len));
      };
      gap(0, 0.5 * tg);
      for (int p = 0; p < m; ++p) {
        const int block = p / 5;
        const double base = block % 2 == 0 ? 0.0 : 0.5 * kPi;
        seq.push_back(Pulse::rotation(kPi, base + kKnill[p % 5]));
        gap(p + 1, p + 1 == m ? 0.5 * tg : tg);
      }
      break;
    }
  }
  return seq;
}

int count_pi_pulses(std::span<const Pulse> seq) {
  return static_cast<int>(std::count_if(seq.begin(), seq.end(), [](const Pulse& p) {
    return p.kind == PulseKind::rotation && std::abs(p.angle - kPi) < 1e-12;
  }));
}

double sequence_duration_us(std::span<const Pulse> seq) {
  double t = 0.0;
  for (const auto& p : seq) t += p.duration_us;
  return t;
}

double longest_gap_us(std::span<const Pulse> seq) {
  double best = 0.0, run = 0.0;
  for (const auto& p : seq) {
    if (p.kind == PulseKind::rotation) {
      best = std::max(best, run);
      run = 0.0;
    } else {
      run += p.duration_us;
    }
  }
  return std::max(best, run);
}

QubitState run_probe(std::span<const Pulse> seq, double delta_stark, double delta_noise) {
  QubitState s = apply_rotation(QubitState{}, 0.5 * kPi, 0.0);
  for (const auto& p : seq) {
    switch (p.kind) {
      case PulseKind::rotation:
        s = apply_rotation(s, p.angle, p.phase);
        break;
      case PulseKind::stark_window:
        s = free_evolve(s, p.duration_us, delta_stark + delta_noise);
        break;
      case PulseKind::delay:
        s = free_evolve(s, p.duration_us, delta_noise);
        break;
    }
  }
  return s;
}

namespace {

/// atan2 of the four-phase quadratures of a state.
double state_phase(const QubitState& s) {
  const double c = measure(s, 0.0) - measure(s, kPi);
  const double sn = measure(s, 1.5 * kPi) - measure(s, 0.5 * kPi);
  return std::atan2(sn, c);
}

double wrap_pi(double a) { return std::remainder(a, 2.0 * kPi); }

struct OracleState {
  double delta;
  RPEConfig cfg;
  NoiseModel noise;
  std::mt19937_64 rng;

  struct Generation {
    bool ready = false;
    std::vector<Pulse> seq;
    double theta_ref = 0.0;
    double orientation = 1.0;
    QubitState noiseless;
  };
  std::vector<Generation> gens;

  const Generation& generation(int k) {
    if (k < 0) throw DomainError("stark_oracle: negative generation");
    if (static_cast<std::size_t>(k) >= gens.size()) gens.resize(static_cast<std::size_t>(k) + 1);
    auto& g = gens[static_cast<std::size_t>(k)];
    if (g.ready) return g;
    const double tau = std::ldexp(cfg.tau0_us, k);
    g.seq = build_sequence(tau, cfg, cfg.mode);
    g.theta_ref = state_phase(run_probe(g.seq, 0.0, 0.0));
    const double probe = state_phase(run_probe(g.seq, 0.5 / tau, 0.0));
    g.orientation = wrap_pi(probe - g.theta_ref) >= 0.0 ? 1.0 : -1.0;
    g.noiseless = run_probe(g.seq, delta, 0.0);
    g.ready = true;
    return g;
  }

  double readout(double p) const {
    return std::clamp(noise.readout_error + (1.0 - 2.0 * noise.readout_error) * p, 0.0, 1.0);
  }

  double sample(int k, double phi) {
    const auto& g = generation(k);
    const double phi_lab = g.orientation * phi - g.theta_ref;
    if (noise.sigma_rad_per_us == 0.0) {
      const double p = readout(measure(g.noiseless, phi_lab));
      if (noise.exact) return p;
      std::binomial_distribution<int> b(noise.shots, p);
      return static_cast<double>(b(rng)) / noise.shots;
    }
    std::normal_distribution<double> nd(0.0, noise.sigma_rad_per_us);
    int ones = 0;
    const int shots = noise.exact ? std::max(noise.shots, 1) : noise.shots;
    double acc = 0.0;
    for (int i = 0; i < shots; ++i) {
      const double p = readout(measure(run_probe(g.seq, delta, nd(rng)), phi_lab));
      if (noise.exact) {
        acc += p;
      } else {
        std::bernoulli_distribution b(p);
        ones += b(rng) ? 1 : 0;
      }
    }
    return noise.exact ? acc / shots : static_cast<double>(ones) / shots;
  }
};

}  // namespace

PhaseOracle stark_oracle(double delta_rad_per_us, const RPEConfig& cfg, const NoiseModel& noise, std::uint64_t stream) {
  cfg.validate();
  noise.validate();
  auto st = std::make_shared<OracleState>(
      OracleState{delta_rad_per_us, cfg, noise, std::mt19937_64(derive_seed(noise.seed, stream)), {}});
  return [st](int k, double phi) { return st->sample(k, phi); };
}

RpeResult rpe_estimate(const PhaseOracle& oracle, const RPEConfig& cfg) {
  cfg.validate();
  RpeResult r;
  double prev = 0.0;
  for (int k = 0; k < cfg.generations; ++k) {
    RpeGeneration g;
    g.k = k;
    g.tau_us = std::ldexp(cfg.tau0_us, k);
    const double p0 = oracle(k, 0.0), p90 = oracle(k, 0.5 * kPi), p180 = oracle(k, kPi), p270 = oracle(k, 1.5 * kPi);
    g.c = p0 - p180;
    g.s = p270 - p90;
    g.theta = std::atan2(g.s, g.c);
    const bool decohered = g.c * g.c + g.s * g.s < cfg.decoherence_threshold;
    if (k == 0) {
      if (g.theta < -0.5 * kPi) g.theta += 2.0 * kPi;
      g.delta_hat = g.theta / g.tau_us;
    } else {
      if (g.theta < 0.0) g.theta += 2.0 * kPi;
      const double m = std::round((prev * g.tau_us - g.theta) / (2.0 * kPi));
      g.delta_hat = (g.theta + 2.0 * kPi * m) / g.tau_us;
    }
    r.trace.push_back(g);
    if (decohered)
      throw DecoheredError("rpe_estimate: decohered generation " + std::to_string(k), std::move(r.trace));
    prev = g.delta_hat;
  }
  r.delta_hat = prev;
  return r;
}

void IonPlaneBeams::validate() const {
  if (centers_um.empty()) throw DomainError("IonPlaneBeams: no beams");
  if (waists_um.size() != centers_um.size() || peaks.size() != centers_um.size())
    throw DomainError("IonPlaneBeams: field lengths differ");
  for (double w : waists_um)
    if (!(w > 0.0)) throw DomainError("IonPlaneBeams: waists must be positive");
  if (!(leakage >= 0.0 && leakage <= 1.0)) throw DomainError("IonPlaneBeams: leakage must lie in [0, 1]");
}

double IonPlaneBeams::intensity(std::size_t ch, double x) const {
  auto g = [&](std::size_t i) {
    const double d = (x - centers_um[i]) / waists_um[i];
    return std::exp(-2.0 * d * d);
  };
  double v = g(ch);
  if (ch > 0) v += leakage * g(ch - 1);
  if (ch + 1 < centers_um.size()) v += leakage * g(ch + 1);
  return peaks[ch] * v;
}

ScanMeasurement scan_ion(const IonPlaneBeams& beams, std::span<const double> positions_um, const ScanOptions& opts,
                         const NoiseModel& noise) {
  beams.validate();
  opts.rpe.validate();
  noise.validate();
  if (positions_um.size() < 8) throw DomainError("scan_ion: need at least 8 positions");
  for (std::size_t i = 1; i < positions_um.size(); ++i)
    if (!(positions_um[i] > positions_um[i - 1])) throw DomainError("scan_ion: positions must be strictly increasing");

  ScanMeasurement out;
  out.positions_um.assign(positions_um.begin(), positions_um.end());
  const std::size_t nch = beams.centers_um.size(), np = positions_um.size();
  const double base = opts.rpe.tau0_us;
  const double shot_scale = noise.exact ? 0.0 : 1.0 / std::sqrt(static_cast<double>(noise.shots));
  const double last_gen = std::ldexp(1.0, opts.rpe.generations - 1);

  for (std::size_t ch = 0; ch < nch; ++ch) {
    ChannelScan cs;
    cs.delta_hat.assign(np, 0.0);
    cs.uncertainty.assign(np, 0.0);
    cs.valid.assign(np, 0);
    for (std::size_t i = 0; i < np; ++i) {
      const double delta = opts.stark_per_intensity * beams.intensity(ch, positions_um[i]);
      const std::uint64_t stream = 2 * (ch * np + i);
      try {
        const double pilot = rpe_estimate(stark_oracle(delta, opts.rpe, noise, stream), opts.rpe).delta_hat;
        const double pilot_unc = shot_scale / (last_gen * base);
        RPEConfig cfg = opts.rpe;
        const double guard = std::abs(pilot) + 3.0 * pilot_unc;
        cfg.tau0_us = guard > 0.0 ? std::clamp(0.5 * kPi / guard, base, opts.max_tau0_factor * base)
                                  : opts.max_tau0_factor * base;
        cs.delta_hat[i] = rpe_estimate(stark_oracle(delta, cfg, noise, stream + 1), cfg).delta_hat;
        cs.uncertainty[i] = shot_scale / (last_gen * cfg.tau0_us);
        cs.valid[i] = 1;
      } catch (const DecoheredError&) {
        cs.delta_hat[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    double peak = 0.0;
    for (std::size_t i = 0; i < np; ++i)
      if (cs.valid[i]) peak = std::max(peak, cs.delta_hat[i]);
    if (!(peak > 0.0)) throw DomainError("scan_ion: channel produced no signal");
    cs.normalized.resize(np);
    for (std::size_t i = 0; i < np; ++i) cs.normalized[i] = cs.valid[i] ? cs.delta_hat[i] / peak : cs.delta_hat[i];
    out.channels.push_back(std::move(cs));
  }

  // Per-channel maxima give a rough pitch for the fit windows.
  std::vector<double> argmax(nch);
  for (std::size_t ch = 0; ch < nch; ++ch) {
    const auto& v = out.channels[ch].normalized;
    std::size_t best = 0;
    for (std::size_t i = 0; i < np; ++i)
      if (out.channels[ch].valid[i] && (!out.channels[ch].valid[best] || v[i] > v[best])) best = i;
    argmax[ch] = positions_um[best];
  }
  double half = opts.fit_half_window_um;
  if (half <= 0.0) {
    if (nch > 1) {
      std::vector<double> s = argmax;
      std::sort(s.begin(), s.end());
      half = 0.5 * (s.back() - s.front()) / static_cast<double>(nch - 1);
    } else {
      half = std::numeric_limits<double>::infinity();
    }
  }
  for (std::size_t ch = 0; ch < nch; ++ch) {
    auto& cs = out.channels[ch];
    std::vector<double> fx, fy;
    for (std::size_t i = 0; i < np; ++i)
      if (cs.valid[i] && std::abs(positions_um[i] - argmax[ch]) <= half) {
        fx.push_back(positions_um[i]);
        fy.push_back(cs.normalized[i]);
      }
    cs.fit = multi_gauss_fit(fx, fy, 1);
  }

  auto nearest_value = [&](const ChannelScan& cs, double x) {
    const auto it = std::lower_bound(positions_um.begin(), positions_um.end(), x);
    std::size_t i = static_cast<std::size_t>(it - positions_um.begin());
    if (i == np || (i > 0 && x - positions_um[i - 1] < positions_um[i] - x)) --i;
    return cs.valid[i] ? cs.normalized[i] : std::numeric_limits<double>::quiet_NaN();
  };
  double wsum = 0.0, rsum = 0.0;
  int rcount = 0;
  std::vector<double> centers;
  for (std::size_t ch = 0; ch < nch; ++ch) {
    auto& cs = out.channels[ch];
    const double top = cs.fit.peaks[0].amplitude + cs.fit.background;
    for (int side = 0; side < 2; ++side) {
      const bool has = side == 0 ? ch > 0 : ch + 1 < nch;
      double r = std::numeric_limits<double>::quiet_NaN();
      if (has) {
        const auto& nb = out.channels[side == 0 ? ch - 1 : ch + 1];
        r = nearest_value(cs, nb.fit.peaks[0].center_um) / top;
      }
      cs.neighbour_ratio[static_cast<std::size_t>(side)] = r;
      if (std::isfinite(r)) {
        rsum += r;
        ++rcount;
      }
    }
    wsum += cs.fit.peaks[0].waist_um;
    centers.push_back(cs.fit.peaks[0].center_um);
  }
  std::sort(centers.begin(), centers.end());
  out.mean_waist_um = wsum / static_cast<double>(nch);
  out.mean_pitch_um = nch > 1 ? (centers.back() - centers.front()) / static_cast<double>(nch - 1) : 0.0;
  out.mean_neighbour_ratio = rcount > 0 ? rsum / rcount : 0.0;
  return out;
}

double neighbour_rotation_error(double eps, AddressingMode mode) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("neighbour_rotation_error: eps must lie in [0, 1]");
  const double r = mode == AddressingMode::single_global ? std::sqrt(eps) : eps;
  const double s = std::sin(0.5 * kPi * r);
  return s * s;
}

std::vector<double> neighbor_error(std::span<const std::array<double, 2>> crosstalk, AddressingMode mode) {
  std::vector<double> out(crosstalk.size(), 0.0);
  for (std::size_t i = 0; i < crosstalk.size(); ++i) {
    if (i > 0) out[i] += neighbour_rotation_error(crosstalk[i][0], mode);
    if (i + 1 < crosstalk.size()) out[i] += neighbour_rotation_error(crosstalk[i][1], mode);
  }
  return out;
}

}  // namespace ionaddr
