#include "ionaddr/chip_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <numbers>
#include <string>

#include "ionaddr/errors.hpp"

namespace ionaddr {

void ScanSpec::validate() const {
  if (!(sigma_x_um > 0.0) || !(sigma_y_um > 0.0)) throw DomainError("ScanSpec: sigma must be positive");
  if (!(std::abs(delta_n_peak) <= 0.05)) throw DomainError("ScanSpec: |delta_n_peak| must not exceed 0.05");
}

double ScanSpec::eval(double x, double y) const {
  const double u = (x - center_x_um) / sigma_x_um;
  const double v = (y - center_y_um) / sigma_y_um;
  return delta_n_peak * std::exp(-0.5 * (u * u + v * v));
}

void ChannelCrossSection::validate() const {
  if (!(n_clad > 1.0)) throw DomainError("ChannelCrossSection: n_clad must exceed 1");
  for (const auto& s : scans) s.validate();
  if (!scans.empty() && peak_index() > n_clad + 0.05 + 1e-12)
    throw DomainError("ChannelCrossSection: composite peak exceeds n_clad + 0.05");
}

double ChannelCrossSection::delta_n(double x, double y) const {
  double acc = 0.0;
  for (const auto& s : scans) acc += s.eval(x, y);
  return acc;
}

namespace {
constexpr std::pair<double, double> kCompass[] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
}  // namespace

double ChannelCrossSection::peak_index() const {
  if (scans.empty()) return n_clad;
  double xlo = scans.front().center_x_um, xhi = xlo, ylo = scans.front().center_y_um, yhi = ylo, smin = 1e9;
  for (const auto& s : scans) {
    xlo = std::min(xlo, s.center_x_um - 2 * s.sigma_x_um);
    xhi = std::max(xhi, s.center_x_um + 2 * s.sigma_x_um);
    ylo = std::min(ylo, s.center_y_um - 2 * s.sigma_y_um);
    yhi = std::max(yhi, s.center_y_um + 2 * s.sigma_y_um);
    smin = std::min({smin, s.sigma_x_um, s.sigma_y_um});
  }
  const double h = smin / 8.0;
  double best = -1e300, bx = 0.0, by = 0.0;
  for (double y = ylo; y <= yhi + 1e-12; y += h)
    for (double x = xlo; x <= xhi + 1e-12; x += h) {
      const double v = delta_n(x, y);
      if (v > best) best = v, bx = x, by = y;
    }
  // Compass refinement around the coarse maximum.
  for (double step = h; step > 1e-10; step *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (const auto& [ux, uy] : kCompass) {
        const double v = delta_n(bx + ux * step, by + uy * step);
        if (v > best) {
          best = v, bx += ux * step, by += uy * step;
          moved = true;
        }
      }
    }
  }
  return n_clad + best;
}

void ChipLayout::validate() const {
  if (n_channels < 1) throw DomainError("ChipLayout: n_channels must be >= 1");
  if (!(input_pitch_um > 0.0) || !(output_pitch_um > 0.0)) throw DomainError("ChipLayout: pitches must be positive");
  if (!(len_straight_in_um > 0.0) || !(len_curve_um > 0.0) || !(len_straight_out_um > 0.0))
    throw DomainError("ChipLayout: segment lengths must be positive");
}

double ChipLayout::min_bend_radius_um() const {
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_channels; ++i) r = std::min(r, channel_path(*this, i).min_bend_radius_um());
  return r;
}

ChannelPath::ChannelPath(double x_in_um, double x_out_um, double z_curve_start_um, double curve_len_um,
                         double total_len_um)
    : x_in_(x_in_um), x_out_(x_out_um), z0_(z_curve_start_um), len_(curve_len_um), total_(total_len_um) {}

double ChannelPath::x(double z) const {
  const double s = std::clamp((z - z0_) / len_, 0.0, 1.0);
  return x_in_ + (x_out_ - x_in_) * 0.5 * (1.0 - std::cos(std::numbers::pi * s));
}

double ChannelPath::slope(double z) const {
  const double s = (z - z0_) / len_;
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return (x_out_ - x_in_) * 0.5 * std::numbers::pi / len_ * std::sin(std::numbers::pi * s);
}

double ChannelPath::curvature(double z) const {
  const double s = (z - z0_) / len_;
  if (s < 0.0 || s > 1.0) return 0.0;
  const double d2 = (x_out_ - x_in_) * 0.5 * std::numbers::pi * std::numbers::pi / (len_ * len_) *
                    std::cos(std::numbers::pi * s);
  const double d1 = slope(z);
  return d2 / std::pow(1.0 + d1 * d1, 1.5);
}

double ChannelPath::min_bend_radius_um() const {
  const double amp = std::abs(x_out_ - x_in_);
  if (amp == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * len_ * len_ / (amp * std::numbers::pi * std::numbers::pi);
}

ChannelPath channel_path(const ChipLayout& layout, int channel) {
  layout.validate();
  if (channel < 0 || channel >= layout.n_channels) throw DomainError("channel_path: channel index out of range");
  const double offset = channel - 0.5 * (layout.n_channels - 1);
  return ChannelPath(offset * layout.input_pitch_um, offset * layout.output_pitch_um, layout.len_straight_in_um,
                     layout.len_curve_um, layout.total_length_um());
}

namespace {

ChannelCrossSection normalized_design(std::vector<double> centers, const SpimDesign& d) {
  ChannelCrossSection cs;
  cs.n_clad = d.n_clad;
  for (double c : centers) cs.scans.push_back({c, 0.0, 1e-3, d.sigma_x_um, d.sigma_y_um});
  const double unit_peak = cs.peak_index() - cs.n_clad;
  const double amp = 1e-3 * (d.n_core - d.n_clad) / unit_peak;
  for (auto& s : cs.scans) s.delta_n_peak = amp;
  cs.validate();
  return cs;
}

std::vector<double> core_centers(const SpimDesign& d) {
  if (d.core_scans < 1) throw DomainError("SpimDesign: at least one core scan is required");
  std::vector<double> c;
  for (int k = 0; k < d.core_scans; ++k) c.push_back((k - 0.5 * (d.core_scans - 1)) * d.core_separation_um);
  return c;
}

}  // namespace

ChannelCrossSection spim_output_design(const SpimDesign& d) { return normalized_design(core_centers(d), d); }

ChannelCrossSection spim_input_design(const SpimDesign& d) {
  auto c = core_centers(d);
  const double outer = c.back();
  const double step = d.outer_spacing_factor * d.core_separation_um;
  for (int k = 1; k <= d.outer_scans_per_side; ++k) {
    c.push_back(outer + k * step);
    c.push_back(-(outer + k * step));
  }
  std::sort(c.begin(), c.end());
  return normalized_design(c, d);
}

ChannelCrossSection conventional_design(const ConventionalDesign& d) {
  ChannelCrossSection cs;
  cs.n_clad = d.n_clad;
  cs.scans.push_back({0.0, 0.0, d.delta_n, d.sigma_x_um, d.sigma_y_um});
  cs.validate();
  return cs;
}

RIProfile build_cross_section(const ChannelCrossSection& cs, const Grid& window) {
  cs.validate();
  window.validate();
  if (window.is_1d()) throw DomainError("build_cross_section: window must be two-dimensional");
  for (std::size_t k = 0; k < cs.scans.size(); ++k) {
    const auto& s = cs.scans[k];
    if (s.center_x_um - 4 * s.sigma_x_um < window.x0 - 1e-9 || s.center_x_um + 4 * s.sigma_x_um > window.x_max() + 1e-9 ||
        s.center_y_um - 4 * s.sigma_y_um < window.y0 - 1e-9 || s.center_y_um + 4 * s.sigma_y_um > window.y_max() + 1e-9)
      throw DomainError("build_cross_section: window clips scan " + std::to_string(k) + " (centre +/- 4 sigma)");
  }
  std::vector<double> n(window.size(), cs.n_clad);
  for (std::size_t j = 0; j < window.ny; ++j)
    for (std::size_t i = 0; i < window.nx; ++i) n[window.index(i, j)] += cs.delta_n(window.x(i), window.y(j));
  return RIProfile(window, cs.n_clad, std::move(n));
}

RIProfile conventional_cross_section(const Grid& window, const ConventionalDesign& d) {
  return build_cross_section(conventional_design(d), window);
}

ChannelCrossSection taper_profile(const TaperSpec& t, double z_um) {
  if (!(t.length_um > 0.0)) throw DomainError("taper_profile: taper length must be positive");
  if (!(z_um >= 0.0 && z_um <= t.length_um)) throw DomainError("taper_profile: z outside [0, length]");
  if (z_um == 0.0) return t.input_cs;
  if (z_um == t.length_um) return t.output_cs;

  double w = z_um / t.length_um;
  if (t.interpolation == TaperInterpolation::cosine) w = 0.5 * (1.0 - std::cos(std::numbers::pi * w));
  auto lerp = [w](double a, double b) { return a + (b - a) * w; };

  auto sorted = [](std::vector<ScanSpec> v) {
    std::stable_sort(v.begin(), v.end(), [](const ScanSpec& a, const ScanSpec& b) { return a.center_x_um < b.center_x_um; });
    return v;
  };
  const auto in = sorted(t.input_cs.scans);
  const auto out = sorted(t.output_cs.scans);
  const auto& longer = in.size() >= out.size() ? in : out;
  const auto& shorter = in.size() >= out.size() ? out : in;
  const bool input_longer = in.size() >= out.size();
  const std::size_t offset = (longer.size() - shorter.size()) / 2;

  ChannelCrossSection cs;
  cs.n_clad = lerp(t.input_cs.n_clad, t.output_cs.n_clad);
  for (std::size_t k = 0; k < longer.size(); ++k) {
    const bool paired = k >= offset && k - offset < shorter.size();
    ScanSpec a = longer[k];
    ScanSpec b = paired ? shorter[k - offset] : ScanSpec{a.center_x_um, a.center_y_um, 0.0, a.sigma_x_um, a.sigma_y_um};
    if (!input_longer) std::swap(a, b);
    cs.scans.push_back({lerp(a.center_x_um, b.center_x_um), lerp(a.center_y_um, b.center_y_um),
                        lerp(a.delta_n_peak, b.delta_n_peak), lerp(a.sigma_x_um, b.sigma_x_um),
                        lerp(a.sigma_y_um, b.sigma_y_um)});
  }
  return cs;
}

namespace {

std::size_t peak_row(const RIProfile& p) {
  const auto& g = p.grid();
  const auto s = p.samples();
  const auto it = std::max_element(s.begin(), s.end());
  return static_cast<std::size_t>(it - s.begin()) / g.nx;
}

}  // namespace

double horizontal_fwhm_um(const RIProfile& p) {
  const auto& g = p.grid();
  const std::size_t j = peak_row(p);
  std::size_t imax = 0;
  for (std::size_t i = 0; i < g.nx; ++i)
    if (p.at(i, j) > p.at(imax, j)) imax = i;
  const double half = 0.5 * (p.at(imax, j) - p.n_clad());
  if (!(half > 0.0)) return 0.0;
  auto crossing = [&](int dir) {
    std::size_t i = imax;
    while (true) {
      const std::size_t next = dir > 0 ? i + 1 : i - 1;
      if ((dir > 0 && next >= g.nx) || (dir < 0 && i == 0)) return g.x(i);
      const double a = p.at(i, j) - p.n_clad(), b = p.at(next, j) - p.n_clad();
      if (b < half) return g.x(i) + (g.x(next) - g.x(i)) * (a - half) / (a - b);
      i = next;
    }
  };
  return crossing(+1) - crossing(-1);
}

double horizontal_rms_width_um(const RIProfile& p) {
  const auto& g = p.grid();
  double w = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double d = p.at(i, j) - p.n_clad();
      w += d;
      m1 += d * g.x(i);
      m2 += d * g.x(i) * g.x(i);
    }
  if (!(w > 0.0)) return 0.0;
  m1 /= w;
  return std::sqrt(std::max(0.0, m2 / w - m1 * m1));
}

RIProfile circular_step_profile(double diameter_um, double n_core, double n_clad, const Grid& window) {
  if (!(diameter_um > 0.0)) throw DomainError("circular_step_profile: diameter must be positive");
  if (window.is_1d()) throw DomainError("circular_step_profile: window must be two-dimensional");
  const double r = 0.5 * diameter_um;
  const double hx = 0.5 * window.dx, hy = 0.5 * window.dy;
  const double diag = std::hypot(hx, hy);
  constexpr int kSub = 16;
  const double n2core = n_core * n_core, n2clad = n_clad * n_clad;
  std::vector<double> n(window.size(), n_clad);
  for (std::size_t j = 0; j < window.ny; ++j)
    for (std::size_t i = 0; i < window.nx; ++i) {
      const double x = window.x(i), y = window.y(j);
      const double rc = std::hypot(x, y);
      double frac;
      if (rc + diag <= r) {
        frac = 1.0;
      } else if (rc - diag >= r) {
        frac = 0.0;
      } else {
        int inside = 0;
        for (int a = 0; a < kSub; ++a)
          for (int b = 0; b < kSub; ++b) {
            const double sx = x - hx + (a + 0.5) * window.dx / kSub;
            const double sy = y - hy + (b + 0.5) * window.dy / kSub;
            inside += (sx * sx + sy * sy <= r * r);
          }
        frac = static_cast<double>(inside) / (kSub * kSub);
      }
      n[window.index(i, j)] = std::sqrt(n2clad + frac * (n2core - n2clad));
    }
  return RIProfile(window, n_clad, std::move(n));
}

RIProfile slab_step_profile(double width_um, double n_core, double n_clad, const Grid& window) {
  if (!(width_um > 0.0)) throw DomainError("slab_step_profile: width must be positive");
  const double h = 0.5 * width_um;
  const double n2core = n_core * n_core, n2clad = n_clad * n_clad;
  std::vector<double> n(window.size(), n_clad);
  for (std::size_t j = 0; j < window.ny; ++j)
    for (std::size_t i = 0; i < window.nx; ++i) {
      const double lo = window.x(i) - 0.5 * window.dx, hi = window.x(i) + 0.5 * window.dx;
      const double overlap = std::max(0.0, std::min(hi, h) - std::max(lo, -h));
      n[window.index(i, j)] = std::sqrt(n2clad + overlap / window.dx * (n2core - n2clad));
    }
  return RIProfile(window, n_clad, std::move(n));
}

}  // namespace ionaddr
