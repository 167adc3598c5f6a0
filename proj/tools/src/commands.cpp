#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "config.hpp"
#include "ionaddr/chip_model.hpp"
#include "ionaddr/errors.hpp"
#include "ionaddr/io.hpp"
#include "ionaddr/ion_chain.hpp"
#include "ionaddr/ion_sensor.hpp"
#include "ionaddr/measurement_analysis.hpp"
#include "ionaddr/mode_solver.hpp"
#include "ionaddr/propagation.hpp"

namespace ionaddr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  std::string name;
  Config cfg;
  std::uint64_t seed = 0;
  fs::path dir;
  json summary = json::object();

  std::string file(const std::string& leaf) const { return (dir / leaf).string(); }
};

// ---- config to library types ------------------------------------------------

double wavelength(const Config& c) {
  const double l = c.real("solver.wavelength_um");
  if (!(l > 0.0)) throw ConfigError("solver.wavelength_um", "must be positive");
  return l;
}

SpimDesign spim_params(const Config& c) {
  SpimDesign d;
  d.n_clad = c.real("chip.n_clad");
  d.n_core = c.real("chip.n_core");
  d.core_separation_um = c.real("chip.core_separation_um");
  d.sigma_x_um = c.real("chip.sigma_x_um");
  d.sigma_y_um = c.real("chip.sigma_y_um");
  return d;
}

ConventionalDesign conventional_params(const Config& c) {
  ConventionalDesign d;
  d.n_clad = c.real("chip.n_clad");
  d.delta_n = c.real("chip.conventional_delta_n");
  d.sigma_x_um = d.sigma_y_um = c.real("chip.conventional_sigma_um");
  return d;
}

bool is_spim(const Config& c) {
  const auto d = c.text("chip.design");
  if (d == "spim") return true;
  if (d == "conventional") return false;
  throw ConfigError("chip.design", "expected spim or conventional, got '" + d + "'");
}

TaperInterpolation interpolation(const Config& c) {
  const auto v = c.text("propagation.taper_interpolation");
  if (v == "linear") return TaperInterpolation::linear;
  if (v == "cosine") return TaperInterpolation::cosine;
  throw ConfigError("propagation.taper_interpolation", "expected linear or cosine, got '" + v + "'");
}

ChipDesign chip_design(const Config& c) {
  if (is_spim(c)) return {spim_input_design(spim_params(c)), spim_output_design(spim_params(c)), interpolation(c)};
  const auto cs = conventional_design(conventional_params(c));
  return {cs, cs, interpolation(c)};
}

ChipLayout layout(const Config& c) {
  ChipLayout l;
  l.n_channels = c.integer("chip.n_channels");
  l.input_pitch_um = c.real("chip.input_pitch_um");
  l.output_pitch_um = c.real("chip.output_pitch_um");
  l.len_straight_in_um = c.real("chip.len_straight_in_um");
  l.len_curve_um = c.real("chip.len_curve_um");
  l.len_straight_out_um = c.real("chip.len_straight_out_um");
  l.validate();
  return l;
}

BpmOptions bpm(const Config& c) {
  BpmOptions o;
  o.dz_um = c.real("propagation.dz_um");
  o.absorber_width_um = c.real("propagation.absorber_width_um");
  o.absorber_strength = c.real("propagation.absorber_strength");
  return o;
}

SolverOptions solver(const Config& c) {
  SolverOptions o;
  o.padding_um = c.real("solver.padding_um");
  o.auto_pad = c.integer("solver.auto_pad") != 0;
  return o;
}

/// Lattice holding every scan to +/- 5 sigma plus 1 um.
Grid window_for(const ChannelCrossSection& cs, double d) {
  double hy = 1.0;
  for (const auto& s : cs.scans) hy = std::max(hy, std::abs(s.center_y_um) + 5.0 * s.sigma_y_um);
  return Grid::centered_2d(guide_half_width(cs) + 1.0, hy + 1.0, d, d);
}

RPEConfig rpe_config(const Config& c) {
  RPEConfig r;
  r.tau0_us = c.real("sensor.tau0_us");
  r.generations = c.integer("sensor.generations");
  r.max_gap_us = c.real("sensor.max_gap_us");
  const auto m = c.text("sensor.mode");
  if (m == "auto") r.mode = SequenceMode::automatic;
  else if (m == "spin_echo") r.mode = SequenceMode::spin_echo;
  else if (m == "kdd") r.mode = SequenceMode::kdd;
  else if (m == "ramsey") r.mode = SequenceMode::ramsey;
  else throw ConfigError("sensor.mode", "expected auto, spin_echo, kdd or ramsey, got '" + m + "'");
  return r;
}

NoiseModel noise_model(const Run& run) {
  NoiseModel n;
  n.shots = run.cfg.integer("sensor.shots");
  n.sigma_rad_per_us = run.cfg.real("sensor.sigma_rad_per_us");
  n.readout_error = run.cfg.real("sensor.readout_error");
  n.seed = run.seed;
  return n;
}

std::string two_digit(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

// ---- chip -------------------------------------------------------------------

void chip_build(Run& run) {
  const auto& c = run.cfg;
  const ChipLayout l = layout(c);
  const ChipDesign d = chip_design(c);
  const double wdx = c.real("chip.window_dx_um");
  json lay = json::object();
  lay["n_channels"] = l.n_channels;
  lay["input_pitch_um"] = l.input_pitch_um;
  lay["output_pitch_um"] = l.output_pitch_um;
  lay["len_straight_in_um"] = l.len_straight_in_um;
  lay["len_curve_um"] = l.len_curve_um;
  lay["len_straight_out_um"] = l.len_straight_out_um;
  lay["min_bend_radius_um"] = l.min_bend_radius_um();
  lay["design"] = c.text("chip.design");
  std::vector<double> xin, xout;
  const RIProfile p = build_cross_section(d.output_cs, window_for(d.output_cs, wdx));
  for (int i = 0; i < l.n_channels; ++i) {
    const auto path = channel_path(l, i);
    xin.push_back(path.x_in());
    xout.push_back(path.x_out());
    write_profile_csv(run.file("cross_section_ch" + two_digit(i) + ".csv"), p);
  }
  lay["x_in_um"] = xin;
  lay["x_out_um"] = xout;
  std::ofstream(run.file("layout.json")) << lay.dump(2) << '\n';
  run.summary["files_written"] = l.n_channels + 1;
  run.summary["min_bend_radius_um"] = l.min_bend_radius_um();
  run.summary["peak_index"] = p.peak();
  run.summary["horizontal_fwhm_um"] = horizontal_fwhm_um(p);
}

void chip_path(Run& run) {
  const ChipLayout l = layout(run.cfg);
  const int samples = std::max(2, run.cfg.integer("chip.path_samples"));
  std::vector<ChannelPath> paths;
  for (int i = 0; i < l.n_channels; ++i) paths.push_back(channel_path(l, i));
  std::vector<std::string> header{"z_um"};
  std::vector<std::vector<double>> cols(1);
  for (int i = 0; i < l.n_channels; ++i) {
    header.push_back("x_ch" + two_digit(i) + "_um");
    cols.emplace_back();
  }
  double min_sep = std::numeric_limits<double>::infinity();
  int crossings = 0;
  for (int s = 0; s < samples; ++s) {
    const double z = l.total_length_um() * s / (samples - 1);
    cols[0].push_back(z);
    for (int i = 0; i < l.n_channels; ++i) {
      cols[static_cast<std::size_t>(i) + 1].push_back(paths[static_cast<std::size_t>(i)].x(z));
      if (i > 0) {
        const double sep = paths[static_cast<std::size_t>(i)].x(z) - paths[static_cast<std::size_t>(i) - 1].x(z);
        min_sep = std::min(min_sep, sep);
        if (!(sep > 0.0)) ++crossings;
      }
    }
  }
  write_csv(run.file("paths.csv"), header, cols);
  run.summary["n_channels"] = l.n_channels;
  run.summary["min_separation_um"] = l.n_channels > 1 ? min_sep : 0.0;
  run.summary["intersections"] = crossings;
  run.summary["min_bend_radius_um"] = l.min_bend_radius_um();
}

// ---- modes ------------------------------------------------------------------

void modes_solve(Run& run) {
  const auto& c = run.cfg;
  const ChipDesign d = chip_design(c);
  const auto facet = c.text("solver.facet");
  if (facet != "output" && facet != "input") throw ConfigError("solver.facet", "expected output or input");
  const auto& cs = facet == "output" ? d.output_cs : d.input_cs;
  const RIProfile p = build_cross_section(cs, window_for(cs, c.real("solver.dx_um")));
  write_profile_csv(run.file("profile.csv"), p);
  const auto modes = solve_modes(p, wavelength(c), c.integer("solver.max_modes"), solver(c));
  std::vector<double> idx, neff, mx, my, res;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto m = mfd(modes[i]);
    idx.push_back(static_cast<double>(i));
    neff.push_back(modes[i].n_eff);
    mx.push_back(m.x_um);
    my.push_back(m.y_um);
    res.push_back(modes[i].residual);
    write_mode_csv(run.file("mode_" + std::to_string(i)), modes[i]);
  }
  write_csv(run.file("modes.csv"), {"index", "n_eff", "mfd_x_um", "mfd_y_um", "residual"}, {idx, neff, mx, my, res});
  run.summary["n_modes"] = modes.size();
  if (!modes.empty()) {
    run.summary["n_eff"] = modes[0].n_eff;
    run.summary["mfd_x_um"] = mx[0];
    run.summary["mfd_y_um"] = my[0];
  }
}

void modes_cutoff_scan(Run& run) {
  const auto& c = run.cfg;
  const double lo = c.real("solver.cutoff_contrast_min"), hi = c.real("solver.cutoff_contrast_max");
  const int steps = c.integer("solver.cutoff_steps");
  if (steps < 1) throw ConfigError("solver.cutoff_steps", "must be >= 1");
  if (!(lo > 0.0) || hi < lo) throw ConfigError("solver.cutoff_contrast_min", "need 0 < min <= max");
  const double n_clad = c.real("solver.cutoff_n_clad"), lambda = wavelength(c);
  CutoffOptions co;
  co.dx_um = c.real("solver.dx_um");
  std::vector<double> contrast, dmax, dv;
  for (int k = 0; k < steps; ++k) {
    const double dn = steps == 1 ? lo : lo + (hi - lo) * k / (steps - 1);
    contrast.push_back(dn);
    dmax.push_back(single_mode_cutoff(dn, lambda, n_clad, co));
    const double na = std::sqrt((n_clad + dn) * (n_clad + dn) - n_clad * n_clad);
    dv.push_back(2.404825557695773 * lambda / (std::numbers::pi * na));
  }
  write_csv(run.file("cutoff.csv"), {"contrast", "d_max_um", "d_vnumber_um"}, {contrast, dmax, dv});
  run.summary["rows"] = steps;
  run.summary["d_max_first_um"] = dmax.front();
  run.summary["d_max_last_um"] = dmax.back();
}

// ---- coupling ---------------------------------------------------------------

void couple_vga(Run& run) {
  const auto& c = run.cfg;
  const double lambda = wavelength(c), dx = c.real("solver.dx_um");
  const double core = c.real("couple.fiber_core_um");
  const RIProfile fp = circular_step_profile(core, c.real("couple.fiber_n_core"), c.real("couple.fiber_n_clad"),
                                             Grid::centered_2d(0.5 * core + 1.0, 0.5 * core + 1.0, dx, dx));
  SolverOptions so = solver(c);
  const auto fm = solve_modes(fp, lambda, 1, so);
  if (fm.empty()) throw DomainError("couple vga: fibre carries no mode");
  const ChipDesign d = chip_design(c);
  auto fundamental = [&](const ChannelCrossSection& cs) {
    const auto m = solve_modes(build_cross_section(cs, window_for(cs, dx)), lambda, 1, so);
    if (m.empty()) throw DomainError("couple vga: chip guide carries no mode");
    return m[0];
  };
  const ModeField in = fundamental(d.input_cs);
  const ModeField out = fundamental(d.output_cs);
  const int n = c.integer("couple.samples");
  const double bx = c.real("couple.bound_x_um"), by = c.real("couple.bound_y_um");
  const auto ri = vga_coupling_mc(fm[0], in, bx, by, n, run.seed);
  const auto ro = vga_coupling_mc(fm[0], out, bx, by, n, run.seed);
  std::vector<double> sx, sy, ei, eo;
  for (std::size_t k = 0; k < ri.samples.size(); ++k) {
    sx.push_back(ri.samples[k].dx_um);
    sy.push_back(ri.samples[k].dy_um);
    ei.push_back(ri.samples[k].efficiency);
    eo.push_back(ro.samples[k].efficiency);
  }
  write_csv(run.file("vga_samples.csv"), {"dx_um", "dy_um", "eta_input_design", "eta_output_design"}, {sx, sy, ei, eo});
  run.summary["fiber_mfd_um"] = mfd(fm[0]).x_um;
  run.summary["input_mfd_x_um"] = mfd(in).x_um;
  run.summary["input_mfd_y_um"] = mfd(in).y_um;
  run.summary["output_mfd_x_um"] = mfd(out).x_um;
  run.summary["output_mfd_y_um"] = mfd(out).y_um;
  run.summary["eta_input_aligned"] = overlap_efficiency(fm[0], in);
  run.summary["eta_output_aligned"] = overlap_efficiency(fm[0], out);
  run.summary["eta_input_mean"] = ri.mean_efficiency;
  run.summary["eta_input_min"] = ri.min_efficiency;
  run.summary["eta_output_mean"] = ro.mean_efficiency;
  run.summary["eta_output_min"] = ro.min_efficiency;
}

// ---- propagation ------------------------------------------------------------

void propagate_taper(Run& run) {
  const auto& c = run.cfg;
  const ChipDesign d = chip_design(c);
  TaperOptions to;
  to.dx_um = c.real("propagation.dx_um");
  to.bpm = bpm(c);
  std::vector<double> lengths = c.real_list("propagation.taper_lengths_um"), trans;
  for (double len : lengths) trans.push_back(taper_transmission({d.input_cs, d.output_cs, len, d.interpolation}, wavelength(c), to));
  write_csv(run.file("taper.csv"), {"length_um", "transmission"}, {lengths, trans});
  for (std::size_t i = 0; i < lengths.size(); ++i)
    run.summary["transmission_" + format_number(lengths[i]) + "_um"] = trans[i];
}

void propagate_bend(Run& run) {
  const auto& c = run.cfg;
  const ChipDesign d = chip_design(c);
  BendOptions bo;
  bo.dx_um = c.real("propagation.dx_um");
  bo.bpm = bpm(c);
  std::vector<double> radii = c.real_list("propagation.bend_radii_um"), trans;
  radii.push_back(std::numeric_limits<double>::infinity());
  const double arc = c.real("propagation.bend_arc_um");
  for (double r : radii) trans.push_back(bend_transmission(d.output_cs, r, arc, wavelength(c), bo));
  write_csv(run.file("bend.csv"), {"radius_um", "transmission"}, {radii, trans});
  run.summary["straight_transmission"] = trans.back();
  for (std::size_t i = 0; i + 1 < radii.size(); ++i)
    run.summary["transmission_" + format_number(radii[i]) + "_um"] = trans[i];
  run.summary["layout_min_bend_radius_um"] = layout(c).min_bend_radius_um();
}

void propagate_crosstalk(Run& run) {
  const auto& c = run.cfg;
  const ChipLayout l = layout(c);
  const int injected = c.integer("propagation.injected");
  ChipScanOptions so;
  so.dx_um = c.real("propagation.dx_um");
  so.bpm = bpm(c);
  const auto r = chip_crosstalk_scan(l, chip_design(c), injected, wavelength(c), so);
  std::vector<double> x(r.grid.nx);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = r.grid.x(i);
  write_csv(run.file("line_profile.csv"), {"x_um", "intensity"}, {x, r.line_intensity});
  write_csv(run.file("power_history.csv"), {"z_um", "power"}, {r.z_um, r.power_history});
  const auto m = crosstalk_metrics(x, r.line_intensity, r.channel_x_out_um, injected, l.output_pitch_um);
  std::vector<double> ch, integrated(r.channel_x_out_um.size(), 1.0);
  for (std::size_t k = 0; k < m.channel.size(); ++k) integrated[static_cast<std::size_t>(m.channel[k])] = m.integrated_ratio[k];
  for (std::size_t k = 0; k < r.channel_x_out_um.size(); ++k) ch.push_back(static_cast<double>(k));
  write_csv(run.file("channels.csv"), {"channel", "x_out_um", "mode_power", "mode_ratio", "peak_ratio", "integrated_ratio"},
            {ch, r.channel_x_out_um, r.mode_power, r.mode_ratio, r.peak_ratio, integrated});
  json report = json::object();
  report["design"] = c.text("chip.design");
  report["injected"] = injected;
  report["neighbours"] = r.neighbours;
  report["mode_ratio"] = r.mode_ratio;
  report["peak_ratio"] = r.peak_ratio;
  report["integrated_ratio"] = integrated;
  std::ofstream(run.file("crosstalk.json")) << report.dump(2) << '\n';
  double worst_mode = 0.0, worst_peak = 0.0;
  for (int nb : r.neighbours) {
    worst_mode = std::max(worst_mode, r.mode_ratio[static_cast<std::size_t>(nb)]);
    worst_peak = std::max(worst_peak, r.peak_ratio[static_cast<std::size_t>(nb)]);
  }
  run.summary["injected"] = injected;
  run.summary["neighbour_count"] = r.neighbours.size();
  run.summary["nearest_mode_ratio"] = worst_mode;
  run.summary["nearest_peak_ratio"] = worst_peak;
  run.summary["injected_power"] = r.mode_power[static_cast<std::size_t>(injected)];
}

// ---- ion chain --------------------------------------------------------------

void write_chain(const Run& run, const ChainConfig& ch) {
  std::vector<double> idx, pos, sp;
  for (std::size_t i = 0; i < ch.positions_um.size(); ++i) {
    idx.push_back(static_cast<double>(i));
    pos.push_back(ch.positions_um[i]);
    sp.push_back(i == 0 ? 0.0 : ch.spacings_um[i - 1]);
  }
  write_csv(run.file("positions.csv"), {"index", "position_um", "spacing_um"}, {idx, pos, sp});
}

void ion_positions(Run& run) {
  const auto& c = run.cfg;
  const AxialPotential pot{c.real("ion.alpha2"), c.real("ion.alpha4")};
  const auto ch = equilibrium_positions(c.integer("ion.n_ions"), pot);
  write_chain(run, ch);
  run.summary["length_scale_um"] = pot.length_scale_um();
  run.summary["mean_spacing_um"] = ch.mean_spacing_um;
  run.summary["relative_rms"] = ch.relative_rms;
  run.summary["gradient_norm"] = ch.gradient_norm;
}

void ion_design(Run& run) {
  const auto& c = run.cfg;
  const auto d = design_uniform_spacing(c.integer("ion.n_ions"), c.real("ion.target_spacing_um"));
  write_chain(run, d.chain);
  json pot = json::object();
  pot["alpha2_ev_per_um2"] = d.potential.alpha2_ev_per_um2;
  pot["alpha4_ev_per_um4"] = d.potential.alpha4_ev_per_um4;
  pot["relative_rms"] = d.chain.relative_rms;
  pot["harmonic_relative_rms"] = d.harmonic.relative_rms;
  std::ofstream(run.file("potential.json")) << pot.dump(2) << '\n';

  const ChipLayout l = layout(c);
  std::vector<double> xo, w;
  for (int i = 0; i < l.n_channels; ++i) {
    xo.push_back(channel_path(l, i).x_out());
    w.push_back(c.real("ion.chip_waist_um"));
  }
  RelayOptions ro;
  ro.magnification = c.real("ion.magnification");
  ro.diffraction_floor_um = c.real("ion.diffraction_floor_um");
  ro.blur_um = c.real("ion.blur_um");
  const auto bm = relay_map(xo, w, ro);
  write_csv(run.file("relay.csv"), {"chip_x_um", "ion_x_um", "ideal_waist_um", "waist_um"},
            {xo, bm.positions_um, bm.ideal_waists_um, bm.waists_um});
  run.summary["mean_spacing_um"] = d.chain.mean_spacing_um;
  run.summary["relative_rms"] = d.chain.relative_rms;
  run.summary["harmonic_relative_rms"] = d.harmonic.relative_rms;
  run.summary["ion_plane_pitch_um"] = l.n_channels > 1 ? bm.positions_um[1] - bm.positions_um[0] : 0.0;
  run.summary["ion_plane_waist_um"] = bm.waists_um.empty() ? 0.0 : bm.waists_um[0];
}

// ---- sensor -----------------------------------------------------------------

void sensor_scan(Run& run) {
  const auto& c = run.cfg;
  const int n = c.integer("sensor.n_beams");
  if (n < 1) throw ConfigError("sensor.n_beams", "must be >= 1");
  IonPlaneBeams b;
  const double pitch = c.real("sensor.pitch_um");
  for (int i = 0; i < n; ++i) {
    b.centers_um.push_back((i - 0.5 * (n - 1)) * pitch);
    b.waists_um.push_back(c.real("sensor.waist_um"));
    b.peaks.push_back(1.0);
  }
  b.leakage = c.real("sensor.leakage");
  const double step = c.real("sensor.scan_step_um");
  if (!(step > 0.0)) throw ConfigError("sensor.scan_step_um", "must be positive");
  const double half = 0.5 * (n - 1) * pitch + c.real("sensor.scan_margin_um");
  const auto np = static_cast<int>(std::floor(2.0 * half / step + 1e-9)) + 1;
  std::vector<double> pos;
  for (int i = 0; i < np; ++i) pos.push_back(-half + step * i);
  ScanOptions so;
  so.rpe = rpe_config(c);
  so.stark_per_intensity = c.real("sensor.stark_per_intensity");
  const auto m = scan_ion(b, pos, so, noise_model(run));
  std::vector<double> ch, x, dh, sd, valid;
  for (std::size_t k = 0; k < m.channels.size(); ++k)
    for (std::size_t i = 0; i < pos.size(); ++i) {
      ch.push_back(static_cast<double>(k));
      x.push_back(pos[i]);
      dh.push_back(m.channels[k].delta_hat[i]);
      sd.push_back(m.channels[k].uncertainty[i]);
      valid.push_back(m.channels[k].valid[i]);
    }
  write_csv(run.file("scan.csv"), {"channel", "position_um", "delta_hat", "sigma_delta", "valid"}, {ch, x, dh, sd, valid});
  json fit = json::object();
  fit["mean_waist_um"] = m.mean_waist_um;
  fit["mean_pitch_um"] = m.mean_pitch_um;
  fit["mean_neighbour_ratio"] = m.mean_neighbour_ratio;
  for (std::size_t k = 0; k < m.channels.size(); ++k) {
    fit["ch" + two_digit(static_cast<int>(k)) + "_center_um"] = m.channels[k].fit.peaks[0].center_um;
    fit["ch" + two_digit(static_cast<int>(k)) + "_waist_um"] = m.channels[k].fit.peaks[0].waist_um;
  }
  std::ofstream(run.file("fit.json")) << fit.dump(2) << '\n';
  run.summary["mean_waist_um"] = m.mean_waist_um;
  run.summary["mean_pitch_um"] = m.mean_pitch_um;
  run.summary["mean_neighbour_ratio"] = m.mean_neighbour_ratio;
}

void sensor_rpe(Run& run) {
  const auto& c = run.cfg;
  const RPEConfig rc = rpe_config(c);
  const double delta = c.real("sensor.delta_rad_per_us");
  std::vector<RpeGeneration> trace;
  int status = 0;
  try {
    const auto r = rpe_estimate(stark_oracle(delta, rc, noise_model(run)), rc);
    trace = r.trace;
    run.summary["delta_hat_rad_per_us"] = r.delta_hat;
    run.summary["error_rad_per_us"] = r.delta_hat - delta;
  } catch (const DecoheredError& e) {
    trace = e.trace();
    run.summary["decohered"] = true;
    status = 1;
  }
  std::vector<double> k, tau, cc, ss, th, dh, pis;
  for (const auto& g : trace) {
    k.push_back(g.k);
    tau.push_back(g.tau_us);
    cc.push_back(g.c);
    ss.push_back(g.s);
    th.push_back(g.theta);
    dh.push_back(g.delta_hat);
    pis.push_back(count_pi_pulses(build_sequence(g.tau_us, rc, rc.mode)));
  }
  write_csv(run.file("trace.csv"), {"k", "tau_us", "c", "s", "theta_rad", "delta_hat_rad_per_us", "pi_pulses"},
            {k, tau, cc, ss, th, dh, pis});
  run.summary["generations"] = trace.size();
  if (status != 0) throw DomainError("sensor rpe: decohered generation; trace written to " + run.file("trace.csv"));
}

void sensor_neighbor_error(Run& run) {
  const auto& c = run.cfg;
  const int n = c.integer("sensor.n_beams");
  if (n < 1) throw ConfigError("sensor.n_beams", "must be >= 1");
  const auto eps = c.real_list("sensor.crosstalk");
  std::vector<std::array<double, 2>> xt(static_cast<std::size_t>(n));
  if (eps.size() == 1) {
    for (auto& e : xt) e = {eps[0], eps[0]};
  } else if (eps.size() == 2 * static_cast<std::size_t>(n)) {
    for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = {eps[2 * i], eps[2 * i + 1]};
  } else {
    throw ConfigError("sensor.crosstalk", "expected 1 or 2 * n_beams values");
  }
  const auto sg = neighbor_error(xt, AddressingMode::single_global);
  const auto ba = neighbor_error(xt, AddressingMode::both_addressed);
  std::vector<double> ch;
  for (int i = 0; i < n; ++i) ch.push_back(i);
  write_csv(run.file("neighbor_error.csv"), {"channel", "error_single_global", "error_both_addressed"}, {ch, sg, ba});
  run.summary["max_error_single_global"] = *std::max_element(sg.begin(), sg.end());
  run.summary["max_error_both_addressed"] = *std::max_element(ba.begin(), ba.end());
}

// ---- analysis ---------------------------------------------------------------

void analyze_hdr(Run& run) {
  const auto& c = run.cfg;
  const auto frames = read_manifest(c.text("analyze.manifest"));
  const auto h = hdr_compose(frames, c.real("analyze.saturation_fraction"));
  const auto& img = h.composite;
  const double px = c.real("analyze.pixel_um");
  Grid g;
  g.x0 = 0.0;
  g.dx = px;
  g.nx = img.cols;
  g.y0 = 0.0;
  g.dy = px;
  g.ny = img.rows;
  std::vector<double> vals = img.data;
  std::size_t nvalid = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!h.valid[i]) {
      vals[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    ++nvalid;
    hi = std::max(hi, vals[i]);
    if (vals[i] > 0.0) lo = std::min(lo, vals[i]);
  }
  write_matrix_csv(run.file("composite.csv"), g, vals);
  int row = c.integer("analyze.row");
  if (row < 0) {
    double best = -1.0;
    for (std::size_t r = 0; r < img.rows; ++r) {
      double s = 0.0;
      for (std::size_t col = 0; col < img.cols; ++col)
        if (h.is_valid(r, col)) s += img.at(r, col);
      if (s > best) {
        best = s;
        row = static_cast<int>(r);
      }
    }
  }
  const auto lp = line_profile(h, static_cast<std::size_t>(row), static_cast<std::size_t>(std::max(1, c.integer("analyze.band"))), px);
  write_csv(run.file("line_profile.csv"), {"x_um", "intensity"}, {lp.x_um, lp.intensity});
  run.summary["frames"] = frames.size();
  run.summary["valid_fraction"] = static_cast<double>(nvalid) / static_cast<double>(std::max<std::size_t>(1, vals.size()));
  run.summary["profile_row"] = row;
  run.summary["dynamic_range"] = std::isfinite(lo) && lo > 0.0 ? hi / lo : 0.0;
}

void analyze_fit(Run& run) {
  const auto& c = run.cfg;
  const auto [header, cols] = read_csv(c.text("analyze.profile"));
  if (cols.size() < 2) throw ConfigError("analyze.profile", "need x_um and intensity columns");
  const auto& x = cols[0];
  const auto& y = cols[1];
  const auto fit = multi_gauss_fit(x, y, c.integer("analyze.peaks"));
  auto peaks = fit.peaks;
  std::sort(peaks.begin(), peaks.end(), [](const GaussPeak& a, const GaussPeak& b) { return a.center_um < b.center_um; });
  std::vector<double> idx, amp, cen, wst;
  double wsum = 0.0;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    idx.push_back(static_cast<double>(i));
    amp.push_back(peaks[i].amplitude);
    cen.push_back(peaks[i].center_um);
    wst.push_back(peaks[i].waist_um);
    wsum += peaks[i].waist_um;
  }
  write_csv(run.file("fit.csv"), {"peak", "amplitude", "center_um", "waist_um"}, {idx, amp, cen, wst});
  run.summary["mean_waist_um"] = wsum / static_cast<double>(peaks.size());
  run.summary["mean_pitch_um"] = peaks.size() > 1 ? (cen.back() - cen.front()) / static_cast<double>(peaks.size() - 1) : 0.0;
  run.summary["background"] = fit.background;
  run.summary["residual_rms"] = fit.residual_rms;
  run.summary["condition_number"] = fit.condition_number;
  run.summary["ill_conditioned"] = fit.ill_conditioned;
  const int injected = c.integer("analyze.injected");
  if (injected >= 0) {
    const auto m = crosstalk_metrics(x, y, cen, injected, c.real("analyze.pitch_um"));
    std::vector<double> ch(m.channel.begin(), m.channel.end());
    write_csv(run.file("crosstalk.csv"), {"channel", "peak_ratio", "integrated_ratio"}, {ch, m.peak_ratio, m.integrated_ratio});
    double worst = 0.0;
    for (std::size_t k = 0; k < m.channel.size(); ++k)
      if (std::abs(m.channel[k] - injected) == 1) worst = std::max(worst, m.peak_ratio[k]);
    run.summary["nearest_peak_ratio"] = worst;
  }
}

std::string hex8(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Simulation and analysis for laser-written multiscan waveguide chips addressing trapped ions"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "runs";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool dry_run = false;
  int channels = 0;
  app.add_option("--config", config_path, "scenario config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master random seed");
  app.add_option("--out", out_dir, "output root directory");
  app.add_flag("--dry-run", dry_run, "print the resolved configuration and exit");
  app.add_option("--set", overrides, "override as key=value (repeatable)");
  app.add_option("--channels", channels, "shorthand for --set chip.n_channels=N");

  using Handler = std::function<void(Run&)>;
  std::vector<std::pair<CLI::App*, std::pair<std::string, Handler>>> leaves;
  auto group = [&](const char* name, const char* help) {
    auto* g = app.add_subcommand(name, help);
    g->require_subcommand(1);
    g->fallthrough();
    return g;
  };
  auto leaf = [&](CLI::App* g, const char* name, const char* help, Handler h) {
    auto* s = g->add_subcommand(name, help);
    s->fallthrough();
    leaves.push_back({s, {g->get_name() + "-" + name, std::move(h)}});
  };
  auto* chip = group("chip", "chip geometry");
  leaf(chip, "build", "channel cross-sections and layout", chip_build);
  leaf(chip, "path", "channel paths along the chip", chip_path);
  auto* modes = group("modes", "guided modes");
  leaf(modes, "solve", "modes of the chip cross-section", modes_solve);
  leaf(modes, "cutoff-scan", "single-mode cutoff against index contrast", modes_cutoff_scan);
  auto* couple = group("couple", "fibre coupling");
  leaf(couple, "vga", "V-groove array coupling Monte Carlo", couple_vga);
  auto* prop = group("propagate", "beam propagation");
  leaf(prop, "taper", "taper transmission against length", propagate_taper);
  leaf(prop, "bend", "bend transmission against radius", propagate_bend);
  leaf(prop, "crosstalk", "whole-chip cross-talk scan", propagate_crosstalk);
  auto* ion = group("ion", "ion chain");
  leaf(ion, "positions", "equilibrium positions", ion_positions);
  leaf(ion, "design", "uniform-spacing potential and relay map", ion_design);
  auto* sensor = group("sensor", "Stark-shift sensing");
  leaf(sensor, "scan", "synthetic ion scan across the beam map", sensor_scan);
  leaf(sensor, "rpe", "robust phase estimation trace", sensor_rpe);
  leaf(sensor, "neighbor-error", "nearest-neighbour gate error", sensor_neighbor_error);
  auto* analyze = group("analyze", "camera data");
  leaf(analyze, "hdr", "compose an exposure stack", analyze_hdr);
  leaf(analyze, "fit", "multi-Gaussian fit of a line profile", analyze_fit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Run r;
  try {
    if (!config_path.empty()) r.cfg.load_file(config_path);
    if (channels > 0) r.cfg.set("chip.n_channels", std::to_string(channels));
    for (const auto& o : overrides) r.cfg.assign(o);
    r.cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  r.seed = seed;
  if (dry_run) {
    std::cout << r.cfg.resolved();
    return 0;
  }

  const Handler* handler = nullptr;
  for (const auto& [sub, named] : leaves)
    if (sub->parsed()) {
      r.name = named.first;
      handler = &named.second;
    }
  if (!handler) return 2;

  try {
    r.dir = fs::path(out_dir) / (r.name + "-" + std::to_string(seed) + "-" + hex8(r.cfg.digest()));
    fs::create_directories(r.dir);
    std::ofstream(r.file("config.resolved"), std::ios::binary) << r.cfg.resolved();
    r.summary["command"] = r.name;
    r.summary["seed"] = seed;
    (*handler)(r);
    std::ofstream(r.file("summary.json"), std::ios::binary) << r.summary.dump(2) << '\n';
    std::cout << r.dir.string() << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!r.dir.empty() && fs::exists(r.dir))
      std::ofstream(r.file("summary.json"), std::ios::binary) << r.summary.dump(2) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ionaddr::cli
