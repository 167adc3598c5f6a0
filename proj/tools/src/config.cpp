#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ionaddr::cli {

namespace {

using K = ValueKind;

const std::vector<KeySpec> kSpecs = {
    // chip
    {"chip.design", K::text, "spim", "spim | conventional"},
    {"chip.n_channels", K::integer, "8", "number of channels"},
    {"chip.input_pitch_um", K::real, "127", "channel pitch at the input facet"},
    {"chip.output_pitch_um", K::real, "8", "channel pitch at the output facet"},
    {"chip.len_straight_in_um", K::real, "2200", "straight input region (taper length)"},
    {"chip.len_curve_um", K::real, "7200", "raised-cosine routing region"},
    {"chip.len_straight_out_um", K::real, "200", "straight output region"},
    {"chip.n_clad", K::real, "1.51", "substrate index"},
    {"chip.n_core", K::real, "1.525", "peak index of the multiscan core"},
    {"chip.core_separation_um", K::real, "0.4", "spacing of the core scans"},
    {"chip.sigma_x_um", K::real, "0.38", "horizontal Gaussian width of one scan"},
    {"chip.sigma_y_um", K::real, "0.68", "vertical Gaussian width of one scan"},
    {"chip.conventional_delta_n", K::real, "0.006", "index contrast of the conventional guide"},
    {"chip.conventional_sigma_um", K::real, "1.0", "Gaussian width of the conventional guide"},
    {"chip.window_dx_um", K::real, "0.1", "sampling of exported cross-sections"},
    {"chip.path_samples", K::integer, "401", "z samples per exported channel path"},
    // solver
    {"solver.wavelength_um", K::real, "0.532", "vacuum wavelength"},
    {"solver.dx_um", K::real, "0.05", "lattice spacing"},
    {"solver.max_modes", K::integer, "4", "modes requested"},
    {"solver.padding_um", K::real, "3", "cladding margin around the structure"},
    {"solver.auto_pad", K::integer, "1", "grow the padding while modes touch the edge"},
    {"solver.facet", K::text, "output", "output | input cross-section for modes solve"},
    {"solver.cutoff_contrast_min", K::real, "0.015", "first contrast of the cutoff scan"},
    {"solver.cutoff_contrast_max", K::real, "0.015", "last contrast of the cutoff scan"},
    {"solver.cutoff_steps", K::integer, "1", "number of contrasts in the scan"},
    {"solver.cutoff_n_clad", K::real, "1.51", "cladding index for the cutoff scan"},
    // coupling
    {"couple.fiber_core_um", K::real, "3.1", "fibre core diameter"},
    {"couple.fiber_n_core", K::real, "1.4607", "fibre core index"},
    {"couple.fiber_n_clad", K::real, "1.455", "fibre cladding index"},
    {"couple.bound_x_um", K::real, "0.7", "horizontal fibre position error bound"},
    {"couple.bound_y_um", K::real, "0.3", "vertical fibre position error bound"},
    {"couple.samples", K::integer, "200", "Monte Carlo samples"},
    // propagation
    {"propagation.dz_um", K::real, "0.25", "BPM step"},
    {"propagation.dx_um", K::real, "0.05", "BPM transverse spacing"},
    {"propagation.absorber_width_um", K::real, "5", "absorbing strip width per edge"},
    {"propagation.absorber_strength", K::real, "6", "absorber attenuation rate at the wall (1/um)"},
    {"propagation.taper_lengths_um", K::real_list, "50,200,2200", "taper lengths to simulate"},
    {"propagation.taper_interpolation", K::text, "linear", "linear | cosine"},
    {"propagation.bend_radii_um", K::real_list, "25000,50000", "bend radii to simulate"},
    {"propagation.bend_arc_um", K::real, "3600", "arc length of each bend"},
    {"propagation.injected", K::integer, "3", "excited channel for the cross-talk scan"},
    // ion chain
    {"ion.n_ions", K::integer, "8", "number of ions"},
    {"ion.alpha2", K::real, "1e-4", "quadratic coefficient (eV/um^2)"},
    {"ion.alpha4", K::real, "0", "quartic coefficient (eV/um^4)"},
    {"ion.target_spacing_um", K::real, "3.95", "design mean spacing"},
    {"ion.chip_waist_um", K::real, "1.05", "output-facet mode radius fed to the relay"},
    {"ion.magnification", K::real, "0.5", "relay magnification"},
    {"ion.diffraction_floor_um", K::real, "0.532", "smallest ion-plane waist"},
    {"ion.blur_um", K::real, "0.40727", "quadrature blur after the floor"},
    // sensor
    {"sensor.tau0_us", K::real, "1", "base Stark duration"},
    {"sensor.generations", K::integer, "8", "RPE generations"},
    {"sensor.max_gap_us", K::real, "500", "longest free interval between pi pulses"},
    {"sensor.mode", K::text, "auto", "auto | spin_echo | kdd | ramsey"},
    {"sensor.shots", K::integer, "100", "shots per measurement point"},
    {"sensor.sigma_rad_per_us", K::real, "0", "quasi-static detuning noise"},
    {"sensor.readout_error", K::real, "0", "symmetric readout error"},
    {"sensor.delta_rad_per_us", K::real, "1.0", "Stark shift probed by sensor rpe"},
    {"sensor.n_beams", K::integer, "8", "beams in the synthetic ion-plane map"},
    {"sensor.waist_um", K::real, "0.67", "ion-plane waist"},
    {"sensor.pitch_um", K::real, "3.95", "ion-plane pitch"},
    {"sensor.leakage", K::real, "5e-4", "cross-talk into each nearest neighbour"},
    {"sensor.stark_per_intensity", K::real, "1", "Stark shift per unit intensity (rad/us)"},
    {"sensor.scan_step_um", K::real, "0.1", "ion shuttle step"},
    {"sensor.scan_margin_um", K::real, "3", "scan range beyond the outer beams"},
    {"sensor.crosstalk", K::real_list, "5e-4", "per-neighbour cross-talk (one value for all, or 2 per channel)"},
    // analysis
    {"analyze.manifest", K::text, "", "exposure manifest (path, scale, saturation_level)"},
    {"analyze.saturation_fraction", K::real, "0.95", "saturation threshold fraction"},
    {"analyze.row", K::integer, "-1", "line-profile row (-1: brightest row)"},
    {"analyze.band", K::integer, "3", "rows averaged into the profile"},
    {"analyze.pixel_um", K::real, "1", "pixel pitch in the object plane"},
    {"analyze.profile", K::text, "", "CSV with x_um,intensity columns"},
    {"analyze.peaks", K::integer, "8", "Gaussians to fit"},
    {"analyze.injected", K::integer, "-1", "injected channel for cross-talk ratios (-1: none)"},
    {"analyze.pitch_um", K::real, "0", "channel pitch (0: from the fit)"},
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::string t(suffix);
  return s.size() >= t.size() && s.compare(s.size() - t.size(), t.size(), t) == 0;
}

}  // namespace

const std::vector<KeySpec>& key_specs() { return kSpecs; }

Config::Config() {
  for (const auto& s : kSpecs) values_[s.key] = s.default_value;
}

const KeySpec& Config::spec(const std::string& key) const {
  for (const auto& s : kSpecs)
    if (key == s.key) return s;
  throw ConfigError(key, "unknown key");
}

void Config::set(const std::string& key, const std::string& value) {
  spec(key);
  values_[key] = trim(value);
}

void Config::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(trim(assignment), "expected key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno), "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno), "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    set(key, line.substr(eq + 1));
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

const std::string& Config::raw(const std::string& key) const {
  spec(key);
  const auto& v = values_.at(key);
  if (v.empty()) throw ConfigError(key, "missing required value");
  return v;
}

bool Config::has_value(const std::string& key) const {
  spec(key);
  return !values_.at(key).empty();
}

double Config::real(const std::string& key) const { return parse_real(key, raw(key)); }

int Config::integer(const std::string& key) const {
  const auto& v = raw(key);
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || out < -1000000000LL || out > 1000000000LL)
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  return static_cast<int>(out);
}

std::string Config::text(const std::string& key) const { return raw(key); }

std::vector<double> Config::real_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(raw(key));
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_real(key, trim(cell)));
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

void Config::validate() const {
  for (const auto& s : kSpecs) {
    const auto& v = values_.at(s.key);
    if (v.empty()) continue;
    std::vector<double> nums;
    switch (s.kind) {
      case K::real:
        nums.push_back(real(s.key));
        break;
      case K::integer:
        nums.push_back(integer(s.key));
        break;
      case K::real_list:
        nums = real_list(s.key);
        break;
      case K::text:
        break;
    }
    const std::string k = s.key;
    const bool unit = ends_with(k, "_um") || ends_with(k, "_us") || ends_with(k, "_rad");
    if (unit)
      for (double x : nums)
        if (x < 0.0) throw ConfigError(k, "must be non-negative");
  }
}

std::string Config::resolved() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t Config::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ionaddr::cli
