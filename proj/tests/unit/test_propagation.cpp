#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/errors.hpp"
#include "ionaddr/propagation.hpp"
#include "support/oracles.hpp"

using namespace ionaddr;

namespace {

constexpr double kLambda = 0.532;

void fill_uniform(std::vector<double>& n, double v) { std::fill(n.begin(), n.end(), v); }

/// 1/e^2 intensity radius from the second moment of |u|^2.
double moment_radius(const Grid& g, std::span<const Complex> u) {
  double p = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < g.nx; ++i) {
    const double w = std::norm(u[i]);
    p += w;
    m1 += w * g.x(i);
    m2 += w * g.x(i) * g.x(i);
  }
  m1 /= p;
  return 2.0 * std::sqrt(m2 / p - m1 * m1);
}

}  // namespace

TEST_SUITE("propagation") {

TEST_CASE("a guide's own fundamental is stationary") {
  const auto g = reduce_guide(spim_output_design(), kLambda);
  const auto f = guide_fundamental(g, kLambda);
  const Grid grid = Grid::centered_1d(g.half_width() + 15.0, 0.05);
  const double c = 0.0;
  const auto prof = place_guides(g, grid, std::span<const double>(&c, 1));
  const auto u0 = place_mode(f, grid);
  const auto r = propagate(prof, u0, kLambda, 1000.0);
  CHECK(power_overlap(grid, u0, r.field) >= 0.999);
  CHECK(1.0 - r.power_history.back() <= 1e-3);
}

TEST_CASE("free-space Gaussian spreads like a Gaussian beam") {
  const double n = 1.51, w0 = 1.0;
  const Grid grid = Grid::centered_1d(30.0, 0.05);
  std::vector<Complex> u(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) u[i] = std::exp(-grid.x(i) * grid.x(i) / (w0 * w0));
  for (double z : {10.0, 25.0}) {
    const auto r = propagate(grid, n, [&](double, std::vector<double>& v) { fill_uniform(v, n); }, u, kLambda, z);
    CHECK(moment_radius(grid, r.field) == doctest::Approx(oracle::gaussian_beam_width(w0, z, kLambda, n)).epsilon(0.02));
  }
}

TEST_CASE("power is conserved without absorbers") {
  const auto g = reduce_guide(spim_output_design(), kLambda);
  const Grid grid = Grid::centered_1d(20.0, 0.05);
  const double c = 1.0;
  const auto prof = place_guides(g, grid, std::span<const double>(&c, 1));
  const auto u0 = place_mode(guide_fundamental(g, kLambda), grid);
  BpmOptions o;
  o.absorber = false;
  const auto r = propagate(prof, u0, kLambda, 250.0, o);
  CHECK(r.power_history.size() >= 1000);
  CHECK(std::abs(r.power_history.back() - 1.0) < 1e-6);
}

TEST_CASE("absorber swallows a 45 degree plane wave") {
  const double n = 1.51, k = 2.0 * oracle::kPi / kLambda * n;
  const Grid grid = Grid::centered_1d(40.0, 0.05);
  for (double deg : {30.0, 45.0}) {
    const double kx = k * std::sin(deg * oracle::kPi / 180.0);
    std::vector<Complex> u(grid.nx);
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x = grid.x(i) - 10.0;
      u[i] = std::exp(-x * x / 16.0) * std::polar(1.0, kx * x);
    }
    // long enough for the packet to reach the right wall and come back past its start
    const double z = 2.0 * 40.0 / (kx / k);
    const auto r = propagate(grid, n, [&](double, std::vector<double>& v) { fill_uniform(v, n); }, u, kLambda, z);
    CHECK(std::sqrt(r.power_history.back()) < 1e-4);
  }
}

TEST_CASE("stability limits are enforced") {
  const Grid grid = Grid::centered_1d(20.0, 0.05);
  std::vector<Complex> u(grid.nx, 1.0);
  BpmOptions o;
  o.dz_um = 2.0;
  CHECK_THROWS_AS(propagate(RIProfile::uniform(grid, 1.51), u, kLambda, 10.0, o), DomainError);
  o.dz_um = 0.25;
  o.absorber_width_um = 2.0;
  CHECK_THROWS_AS(propagate(RIProfile::uniform(grid, 1.51), u, kLambda, 10.0, o), DomainError);
  o.absorber_width_um = 5.0;
  std::vector<double> hot(grid.nx, 1.51);
  hot[grid.nx / 2] = 2.0;
  CHECK_THROWS_AS(propagate(RIProfile(grid, 1.51, hot), u, kLambda, 10.0, o), DomainError);
}

TEST_CASE("two-guide transfer peaks at the supermode beat length") {
  const auto cs = conventional_design();
  const auto probe = coupler_trace(cs, 4.0, 1.0, kLambda);
  REQUIRE(std::isfinite(probe.supermode_splitting));
  const double lpi = kLambda / (2.0 * probe.supermode_splitting);
  const auto tr = coupler_trace(cs, 4.0, 1.5 * lpi, kLambda, {}, 1200);
  const auto it = std::max_element(tr.transfer.begin(), tr.transfer.end());
  const double zpk = tr.z_um[static_cast<std::size_t>(it - tr.transfer.begin())];
  CHECK(zpk == doctest::Approx(lpi).epsilon(0.05));
  CHECK(*it > 0.95);
}

TEST_CASE("coupler cross-talk") {
  const auto spim = spim_output_design(), conv = conventional_design();
  SUBCASE("decoupled at large pitch") { CHECK(coupler_crosstalk(spim, 40.0, 200.0, kLambda) < 1e-9); }
  SUBCASE("multiscan far below the conventional guide at 8 um") {
    const double s = coupler_crosstalk(spim, 8.0, 200.0, kLambda), c = coupler_crosstalk(conv, 8.0, 200.0, kLambda);
    CHECK(s <= 1e-3);
    CHECK(c >= 10.0 * s);
  }
  SUBCASE("reciprocal") {
    CouplerOptions rev;
    rev.reverse = true;
    const double ab = coupler_crosstalk(conv, 6.0, 200.0, kLambda), ba = coupler_crosstalk(conv, 6.0, 200.0, kLambda, rev);
    CHECK(std::abs(ab - ba) < 1e-9);
  }
  SUBCASE("log cross-talk falls linearly with pitch") {
    std::vector<double> p, l;
    for (double pitch = 6.0; pitch <= 14.0; pitch += 2.0) {
      p.push_back(pitch);
      l.push_back(std::log10(coupler_crosstalk(conv, pitch, 200.0, kLambda)));
    }
    const double n = static_cast<double>(p.size());
    double sp = 0, sl = 0, spp = 0, spl = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sp += p[i];
      sl += l[i];
      spp += p[i] * p[i];
      spl += p[i] * l[i];
    }
    const double b = (n * spl - sp * sl) / (n * spp - sp * sp), a = (sl - b * sp) / n;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(l[i] - (a + b * p[i])));
    CHECK(b < 0.0);
    CHECK(worst < 0.15 * (l.front() - l.back()));
  }
  SUBCASE("halving dz barely moves the answer") {
    CouplerOptions fine;
    fine.bpm.dz_um = 0.125;
    CHECK(std::abs(coupler_crosstalk(conv, 6.0, 200.0, kLambda) - coupler_crosstalk(conv, 6.0, 200.0, kLambda, fine)) < 1e-3);
  }
}

TEST_CASE("taper transmission") {
  SUBCASE("zero-length taper between identical sections") {
    CHECK(taper_transmission({spim_output_design(), spim_output_design(), 0.0}, kLambda) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("long taper beats a short one") {
    TaperSpec t{spim_input_design(), spim_output_design(), 2200.0};
    const double slow = taper_transmission(t, kLambda);
    t.length_um = 50.0;
    const double fast = taper_transmission(t, kLambda);
    CHECK(slow >= 0.98);
    CHECK(fast < slow);
  }
}

TEST_CASE("bend transmission") {
  const double r = ChipLayout{}.min_bend_radius_um();
  const auto spim = spim_output_design();
  const double inf = std::numeric_limits<double>::infinity();
  const double straight = bend_transmission(spim, inf, 3600.0, kLambda);
  CHECK(straight > 0.999);
  const double bent = bend_transmission(spim, r, 3600.0, kLambda);
  CHECK(bent >= 0.99);
  CHECK(bend_transmission(conventional_design(), r, 3600.0, kLambda) <= bent);
  CHECK_THROWS_AS(bend_transmission(spim, -1.0, 100.0, kLambda), DomainError);
}

TEST_CASE("single-channel chip scan") {
  ChipLayout l;
  l.n_channels = 1;
  l.len_straight_in_um = 300.0;
  l.len_curve_um = 300.0;
  l.len_straight_out_um = 100.0;
  const auto r = chip_crosstalk_scan(l, spim_chip_design(), 0, kLambda);
  CHECK(r.neighbours.empty());
  CHECK(r.mode_ratio[0] == 1.0);
  int maxima = 0;
  const double top = *std::max_element(r.line_intensity.begin(), r.line_intensity.end());
  for (std::size_t i = 1; i + 1 < r.line_intensity.size(); ++i)
    if (r.line_intensity[i] > 1e-3 * top && r.line_intensity[i] >= r.line_intensity[i - 1] &&
        r.line_intensity[i] > r.line_intensity[i + 1])
      ++maxima;
  CHECK(maxima == 1);
  CHECK_THROWS_AS(chip_crosstalk_scan(l, spim_chip_design(), 1, kLambda), DomainError);
}

TEST_CASE("edge injection reports one neighbour") {
  ChipLayout l;
  l.n_channels = 3;
  l.len_straight_in_um = 300.0;
  l.len_curve_um = 600.0;
  l.len_straight_out_um = 100.0;
  const auto r = chip_crosstalk_scan(l, spim_chip_design(), 0, kLambda);
  REQUIRE(r.neighbours.size() == 1);
  CHECK(r.neighbours[0] == 1);
}

}  // TEST_SUITE

TEST_SUITE("propagation_chip") {

TEST_CASE("conventional chip shows secondary peaks at the output pitch") {
  const ChipLayout l;
  const auto r = chip_crosstalk_scan(l, conventional_chip_design(), 4, kLambda);
  const auto at = [&](double x) {
    const auto i = static_cast<std::size_t>(std::lround((x - r.grid.x0) / r.grid.dx));
    return r.line_intensity[i];
  };
  const double x4 = r.channel_x_out_um[4];
  const double main = at(x4);
  for (double d : {-8.0, 8.0}) {
    const double peak = at(x4 + d);
    double valley = peak;
    for (double s = 0.25; s < 1.0; s += 0.01) valley = std::min(valley, at(x4 + s * d));
    CHECK(peak > 1e-5 * main);
    CHECK(peak > 3.0 * valley);
  }
  REQUIRE(r.neighbours.size() == 2);
  for (int nb : r.neighbours) CHECK(r.mode_ratio[static_cast<std::size_t>(nb)] > 1e-4);
}

}  // TEST_SUITE
