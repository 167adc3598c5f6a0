#include "ionaddr/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ionaddr/errors.hpp"

namespace ionaddr {

double field_power(const Grid& grid, std::span<const Complex> u) {
  double s = 0.0;
  for (const auto& v : u) s += std::norm(v);
  return s * grid.dx;
}

Complex inner_product(const Grid& grid, std::span<const Complex> a, std::span<const Complex> b) {
  Complex s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s * grid.dx;
}

double power_overlap(const Grid& grid, std::span<const Complex> a, std::span<const Complex> b) {
  const double pa = field_power(grid, a), pb = field_power(grid, b);
  if (!(pa > 0.0) || !(pb > 0.0)) return 0.0;
  return std::norm(inner_product(grid, a, b)) / (pa * pb);
}

std::vector<Complex> place_mode(const ModeField& m, const Grid& grid, double x_shift) {
  if (!m.grid.is_1d()) throw DomainError("place_mode: mode must be one-dimensional");
  std::vector<Complex> u(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) u[i] = m.sample(grid.x(i) - x_shift);
  const double p = field_power(grid, u);
  if (!(p > 0.0)) throw DomainError("place_mode: mode does not overlap the lattice");
  const double s = 1.0 / std::sqrt(p);
  for (auto& v : u) v *= s;
  return u;
}

namespace {

/// Constant-coefficient Crank-Nicolson half-step for u_z = i/(2 k0 n_ref) u_xx
/// with Dirichlet edges; the Thomas elimination factors are precomputed.
class CrankNicolson {
 public:
  CrankNicolson(std::size_t n, double dx, double h, double k0, double n_ref)
      : beta_(Complex(0.0, h / (4.0 * k0 * n_ref * dx * dx))), cp_(n), inv_(n), rhs_(n) {
    const Complex diag = 1.0 + 2.0 * beta_;
    const Complex off = -beta_;
    inv_[0] = 1.0 / diag;
    cp_[0] = off * inv_[0];
    for (std::size_t i = 1; i < n; ++i) {
      inv_[i] = 1.0 / (diag - off * cp_[i - 1]);
      cp_[i] = off * inv_[i];
    }
  }

  void apply(std::vector<Complex>& u) {
    const std::size_t n = u.size();
    const Complex d = 1.0 - 2.0 * beta_;
    for (std::size_t i = 0; i < n; ++i) {
      Complex r = d * u[i];
      if (i > 0) r += beta_ * u[i - 1];
      if (i + 1 < n) r += beta_ * u[i + 1];
      rhs_[i] = r;
    }
    const Complex off = -beta_;
    // Forward sweep then back substitution.
    rhs_[0] *= inv_[0];
    for (std::size_t i = 1; i < n; ++i) rhs_[i] = (rhs_[i] - off * rhs_[i - 1]) * inv_[i];
    u[n - 1] = rhs_[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) u[i] = rhs_[i] - cp_[i] * u[i + 1];
  }

 private:
  Complex beta_;
  std::vector<Complex> cp_, inv_, rhs_;
};

std::vector<double> absorber_mask(const Grid& g, const BpmOptions& o) {
  std::vector<double> mask(g.nx, 1.0);
  if (!o.absorber) return mask;
  const double w = o.absorber_width_um;
  for (std::size_t i = 0; i < g.nx; ++i) {
    const double d = std::max(g.x0 + w - g.x(i), g.x(i) - (g.x_max() - w));
    if (d <= 0.0) continue;
    const double r = std::min(d / w, 1.0);
    mask[i] = std::exp(-o.absorber_strength * r * r * r * r * o.dz_um);
  }
  return mask;
}

}  // namespace

PropagationResult propagate(const Grid& grid, double n_clad, const IndexFunction& index, std::vector<Complex> input,
                            double wavelength_um, double length_um, const BpmOptions& opts) {
  if (!grid.is_1d()) throw DomainError("propagate: transverse lattice must be one-dimensional");
  if (input.size() != grid.nx) throw DomainError("propagate: input field does not match the lattice");
  if (!(wavelength_um > 0.0)) throw DomainError("propagate: wavelength must be positive");
  if (!(length_um >= 0.0)) throw DomainError("propagate: length must be non-negative");
  if (!(opts.dz_um > 0.0) || opts.dz_um > 1.0) throw DomainError("propagate: dz must lie in (0, 1] um");
  if (opts.absorber && opts.absorber_width_um < 5.0)
    throw DomainError("propagate: absorbing strips must be at least 5 um wide");
  if (opts.absorber && 2.0 * opts.absorber_width_um >= grid.x_max() - grid.x0)
    throw DomainError("propagate: lattice too narrow for the absorbing strips");

  const double k0 = wavenumber(wavelength_um);
  const double n_ref = opts.n_ref > 0.0 ? opts.n_ref : n_clad;
  const auto steps = static_cast<std::size_t>(std::ceil(length_um / opts.dz_um - 1e-9));
  const double dz = steps > 0 ? length_um / static_cast<double>(steps) : opts.dz_um;
  BpmOptions o = opts;
  o.dz_um = dz;

  std::vector<double> n(grid.nx, n_clad);
  auto check_phase = [&](double z) {
    double worst = 0.0;
    for (double v : n) worst = std::max(worst, std::abs(v - n_ref));
    if (k0 * worst * dz > std::numbers::pi / 4.0)
      throw DomainError("propagate: index phase step exceeds pi/4 at z = " + std::to_string(z) +
                        " um; reduce dz");
  };
  index(0.5 * dz, n);
  check_phase(0.5 * dz);

  CrankNicolson half(grid.nx, grid.dx, 0.5 * dz, k0, n_ref);
  const auto mask = absorber_mask(grid, o);
  const double p0 = field_power(grid, input);
  if (!(p0 > 0.0)) throw DomainError("propagate: input field has zero power");

  PropagationResult res;
  res.grid = grid;
  const std::size_t stride = std::max<std::size_t>(1, opts.history_stride);
  res.z_um.push_back(0.0);
  res.power_history.push_back(1.0);
  std::vector<Complex>& u = input;
  for (std::size_t s = 0; s < steps; ++s) {
    const double zm = (static_cast<double>(s) + 0.5) * dz;
    if (s > 0) {
      index(zm, n);
      check_phase(zm);
    }
    half.apply(u);
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double dn = n[i] - n_ref;
      if (dn != 0.0) u[i] *= std::polar(1.0, k0 * dn * dz);
    }
    half.apply(u);
    if (opts.absorber)
      for (std::size_t i = 0; i < grid.nx; ++i) u[i] *= mask[i];
    const double z = static_cast<double>(s + 1) * dz;
    if ((s + 1) % stride == 0 || s + 1 == steps) {
      res.z_um.push_back(z);
      res.power_history.push_back(field_power(grid, u) / p0);
    }
    if (opts.observer && opts.observe_stride > 0 && ((s + 1) % opts.observe_stride == 0 || s + 1 == steps))
      opts.observer(z, u);
  }
  res.field = std::move(u);
  return res;
}

PropagationResult propagate(const RIProfile& profile, std::vector<Complex> input, double wavelength_um,
                            double length_um, const BpmOptions& opts) {
  const std::vector<double> n(profile.samples().begin(), profile.samples().end());
  return propagate(
      profile.grid(), profile.n_clad(), [&](double, std::vector<double>& out) { out = n; }, std::move(input),
      wavelength_um, length_um, opts);
}

double GuideProfile::at(double x) const { return interp_uniform(delta, grid.x0, grid.dx, x, 0.0); }

double guide_half_width(const ChannelCrossSection& cs) {
  double h = 1.0;
  for (const auto& s : cs.scans) h = std::max(h, std::abs(s.center_x_um) + 5.0 * s.sigma_x_um);
  return h;
}

GuideProfile reduce_guide(const ChannelCrossSection& cs, double wavelength_um, double dx_um, double half_width_um) {
  cs.validate();
  const double hx = half_width_um > 0.0 ? half_width_um : guide_half_width(cs);
  double hy = 1.0;
  for (const auto& s : cs.scans) hy = std::max(hy, std::abs(s.center_y_um) + 5.0 * s.sigma_y_um);
  const Grid g1 = Grid::centered_1d(hx, dx_um);
  GuideProfile out;
  out.grid = g1;
  out.n_clad = cs.n_clad;
  out.delta.assign(g1.nx, 0.0);
  if (cs.scans.empty()) return out;
  const double dy = std::min(dx_um, wavelength_um / 8.0);
  const RIProfile p2 = build_cross_section(cs, Grid::centered_2d(hx, hy, dx_um, dy));
  const RIProfile p1 = effective_index_reduce(p2, wavelength_um);
  for (std::size_t i = 0; i < g1.nx; ++i) out.delta[i] = p1.at(i) - cs.n_clad;
  return out;
}

GuideProfile blend(const GuideProfile& a, const GuideProfile& b, double t) {
  if (!a.grid.same_lattice(b.grid)) throw DomainError("blend: profiles live on different lattices");
  GuideProfile out = a;
  for (std::size_t i = 0; i < out.delta.size(); ++i) out.delta[i] = (1.0 - t) * a.delta[i] + t * b.delta[i];
  return out;
}

RIProfile place_guides(const GuideProfile& g, const Grid& grid, std::span<const double> centers) {
  std::vector<double> n(grid.size(), g.n_clad);
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (double c : centers) n[i] += g.at(grid.x(i) - c);
  return RIProfile(grid, g.n_clad, std::move(n));
}

ModeField guide_fundamental(const GuideProfile& g, double wavelength_um, int* mode_count) {
  const double c = 0.0;
  const RIProfile p = place_guides(g, g.grid, std::span<const double>(&c, 1));
  SolverOptions so;
  const auto modes = solve_modes(p, wavelength_um, mode_count ? 2 : 1, so);
  if (modes.empty()) throw DomainError("guide_fundamental: guide carries no mode");
  if (mode_count) *mode_count = static_cast<int>(modes.size());
  return modes.front();
}

namespace {

void symmetrize(std::vector<double>& n) {
  for (std::size_t i = 0, j = n.size() - 1; i < j; ++i, --j) n[i] = n[j] = 0.5 * (n[i] + n[j]);
}

}  // namespace

CouplerTrace coupler_trace(const ChannelCrossSection& cs, double pitch_um, double length_um, double wavelength_um,
                           const CouplerOptions& opts, std::size_t samples) {
  if (!(pitch_um > 0.0)) throw DomainError("coupler_trace: pitch must be positive");
  const GuideProfile guide = reduce_guide(cs, wavelength_um, opts.dx_um);
  int count = 0;
  const ModeField fund = guide_fundamental(guide, wavelength_um, &count);
  if (count > 1) throw DomainError("coupler_trace: guide is multimode");

  const Grid grid = Grid::centered_1d(0.5 * pitch_um + guide.half_width() + opts.margin_um, opts.dx_um);
  const double centers[] = {-0.5 * pitch_um, 0.5 * pitch_um};
  const RIProfile pair = place_guides(guide, grid, centers);
  std::vector<double> n(pair.samples().begin(), pair.samples().end());
  symmetrize(n);
  const RIProfile sym(grid, cs.n_clad, n);

  std::vector<Complex> left = place_mode(fund, grid, -0.5 * pitch_um);
  std::vector<Complex> right(left.rbegin(), left.rend());
  if (opts.reverse) std::swap(left, right);

  CouplerTrace tr;
  try {
    SolverOptions so;
    so.auto_pad = false;
    const auto sm = solve_modes(sym, wavelength_um, 2, so);
    tr.supermode_splitting = sm.size() >= 2 ? sm[0].n_eff - sm[1].n_eff : std::numeric_limits<double>::quiet_NaN();
  } catch (const ConvergenceError&) {
    tr.supermode_splitting = std::numeric_limits<double>::quiet_NaN();
  }

  BpmOptions bo = opts.bpm;
  if (samples > 0) {
    const auto steps = static_cast<std::size_t>(std::ceil(length_um / bo.dz_um - 1e-9));
    bo.observe_stride = std::max<std::size_t>(1, steps / samples);
    bo.observer = [&](double z, std::span<const Complex> u) {
      tr.z_um.push_back(z);
      tr.transfer.push_back(std::norm(inner_product(grid, right, u)));
    };
  }
  const auto res = propagate(sym, left, wavelength_um, length_um, bo);
  tr.crosstalk = std::norm(inner_product(grid, right, res.field));
  return tr;
}

double coupler_crosstalk(const ChannelCrossSection& cs, double pitch_um, double length_um, double wavelength_um,
                         const CouplerOptions& opts) {
  return coupler_trace(cs, pitch_um, length_um, wavelength_um, opts).crosstalk;
}

double taper_transmission(const TaperSpec& t, double wavelength_um, const TaperOptions& opts) {
  if (t.length_um < 0.0) throw DomainError("taper_transmission: length must be non-negative");
  const double half = std::max(guide_half_width(t.input_cs), guide_half_width(t.output_cs));
  const GuideProfile gin = reduce_guide(t.input_cs, wavelength_um, opts.dx_um, half);
  const GuideProfile gout = reduce_guide(t.output_cs, wavelength_um, opts.dx_um, half);
  const ModeField min = guide_fundamental(gin, wavelength_um);
  const ModeField mout = guide_fundamental(gout, wavelength_um);
  const Grid grid = Grid::centered_1d(half + opts.margin_um, opts.dx_um);
  const auto a = place_mode(min, grid);
  const auto b = place_mode(mout, grid);
  if (t.length_um == 0.0) return std::norm(inner_product(grid, b, a));

  const int k = std::max(2, opts.profile_samples);
  std::vector<GuideProfile> stations;
  stations.reserve(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    const double z = t.length_um * s / (k - 1);
    if (s == 0) stations.push_back(gin);
    else if (s == k - 1) stations.push_back(gout);
    else stations.push_back(reduce_guide(taper_profile(t, z), wavelength_um, opts.dx_um, half));
  }
  const double n_clad = t.output_cs.n_clad;
  auto index = [&](double z, std::vector<double>& n) {
    const double f = std::clamp(z / t.length_um, 0.0, 1.0) * (k - 1);
    const auto s = std::min(static_cast<std::size_t>(f), static_cast<std::size_t>(k - 2));
    const double w = f - static_cast<double>(s);
    const auto& p = stations[s];
    const auto& q = stations[s + 1];
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x = grid.x(i);
      n[i] = n_clad + (1.0 - w) * p.at(x) + w * q.at(x);
    }
  };
  const auto res = propagate(grid, n_clad, index, a, wavelength_um, t.length_um, opts.bpm);
  return std::norm(inner_product(grid, b, res.field));
}

double bend_transmission(const ChannelCrossSection& cs, double radius_um, double arc_length_um, double wavelength_um,
                         const BendOptions& opts) {
  if (!(radius_um > 0.0)) throw DomainError("bend_transmission: radius must be positive");
  const GuideProfile guide = reduce_guide(cs, wavelength_um, opts.dx_um);
  const ModeField fund = guide_fundamental(guide, wavelength_um);
  const Grid grid = Grid::centered_1d(guide.half_width() + opts.margin_um, opts.dx_um);
  const double c = 0.0;
  const RIProfile straight = place_guides(guide, grid, std::span<const double>(&c, 1));
  std::vector<double> n(straight.samples().begin(), straight.samples().end());
  if (std::isfinite(radius_um))
    for (std::size_t i = 0; i < grid.nx; ++i) n[i] *= 1.0 + grid.x(i) / radius_um;
  const auto launch = place_mode(fund, grid);
  const auto res = propagate(
      grid, cs.n_clad, [&](double, std::vector<double>& out) { out = n; }, launch, wavelength_um, arc_length_um,
      opts.bpm);
  return std::norm(inner_product(grid, launch, res.field));
}

ChipDesign spim_chip_design() { return {spim_input_design(), spim_output_design(), TaperInterpolation::linear}; }

ChipDesign conventional_chip_design() {
  const auto cs = conventional_design();
  return {cs, cs, TaperInterpolation::linear};
}

ChipScanResult chip_crosstalk_scan(const ChipLayout& layout, const ChipDesign& design, int injected,
                                   double wavelength_um, const ChipScanOptions& opts) {
  layout.validate();
  if (injected < 0 || injected >= layout.n_channels) throw DomainError("chip_crosstalk_scan: injected channel out of range");
  const auto nch = static_cast<std::size_t>(layout.n_channels);
  std::vector<ChannelPath> paths;
  for (int i = 0; i < layout.n_channels; ++i) paths.push_back(channel_path(layout, i));

  const double half = std::max(guide_half_width(design.input_cs), guide_half_width(design.output_cs));
  TaperSpec taper{design.input_cs, design.output_cs, layout.len_straight_in_um, design.interpolation};
  const int k = std::max(2, opts.profile_samples);
  std::vector<GuideProfile> stations;
  for (int s = 0; s < k; ++s) {
    const double z = taper.length_um * s / (k - 1);
    stations.push_back(reduce_guide(taper_profile(taper, z), wavelength_um, opts.dx_um, half));
  }
  const GuideProfile& gout = stations.back();

  double xlo = 0.0, xhi = 0.0;
  for (const auto& p : paths) {
    xlo = std::min({xlo, p.x_in(), p.x_out()});
    xhi = std::max({xhi, p.x_in(), p.x_out()});
  }
  const double ext = std::max(std::abs(xlo), std::abs(xhi)) + half + opts.margin_um;
  const Grid grid = Grid::centered_1d(ext, opts.dx_um);
  const double n_clad = design.output_cs.n_clad;

  // Local profiles live on the same spacing; place them by linear interpolation.
  std::vector<std::pair<std::size_t, std::size_t>> touched;
  GuideProfile work = stations.front();
  auto index = [&](double z, std::vector<double>& n) {
    for (auto [a, b] : touched) std::fill(n.begin() + static_cast<std::ptrdiff_t>(a), n.begin() + static_cast<std::ptrdiff_t>(b), n_clad);
    touched.clear();
    const GuideProfile* g = &gout;
    if (z < taper.length_um) {
      const double f = std::clamp(z / taper.length_um, 0.0, 1.0) * (k - 1);
      const auto s = std::min(static_cast<std::size_t>(f), static_cast<std::size_t>(k - 2));
      const double w = f - static_cast<double>(s);
      for (std::size_t i = 0; i < work.delta.size(); ++i)
        work.delta[i] = (1.0 - w) * stations[s].delta[i] + w * stations[s + 1].delta[i];
      g = &work;
    }
    const double h = g->half_width();
    for (const auto& p : paths) {
      const double xc = p.x(z);
      const auto a = static_cast<std::size_t>(std::max(0.0, std::floor((xc - h - grid.x0) / grid.dx)));
      const auto b = std::min(grid.nx, static_cast<std::size_t>(std::ceil((xc + h - grid.x0) / grid.dx)) + 1);
      for (std::size_t i = a; i < b; ++i) n[i] += g->at(grid.x(i) - xc);
      touched.emplace_back(a, b);
    }
  };

  const ModeField min = guide_fundamental(stations.front(), wavelength_um);
  const ModeField mout = guide_fundamental(gout, wavelength_um);
  const auto& ip = paths[static_cast<std::size_t>(injected)];
  auto launch = place_mode(min, grid, ip.x_in());

  BpmOptions bo = opts.bpm;
  bo.history_stride = std::max<std::size_t>(bo.history_stride, 40);
  const auto res = propagate(grid, n_clad, index, std::move(launch), wavelength_um, layout.total_length_um(), bo);

  ChipScanResult out;
  out.injected = injected;
  out.grid = grid;
  out.z_um = res.z_um;
  out.power_history = res.power_history;
  out.line_intensity.resize(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) out.line_intensity[i] = std::norm(res.field[i]);
  auto intensity_at = [&](double x) {
    return interp_uniform(out.line_intensity, grid.x0, grid.dx, x, 0.0);
  };
  const double ref_peak = intensity_at(ip.x_out());
  for (std::size_t c = 0; c < nch; ++c) {
    const double xo = paths[c].x_out();
    out.channel_x_out_um.push_back(xo);
    const auto m = place_mode(mout, grid, xo);
    out.mode_power.push_back(std::norm(inner_product(grid, m, res.field)));
    out.peak_ratio.push_back(ref_peak > 0.0 ? intensity_at(xo) / ref_peak : 0.0);
  }
  const double ref = out.mode_power[static_cast<std::size_t>(injected)];
  for (double p : out.mode_power) out.mode_ratio.push_back(ref > 0.0 ? p / ref : 0.0);
  if (injected > 0) out.neighbours.push_back(injected - 1);
  if (injected + 1 < layout.n_channels) out.neighbours.push_back(injected + 1);
  return out;
}

}  // namespace ionaddr
