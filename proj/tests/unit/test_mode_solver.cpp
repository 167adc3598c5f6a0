#include <doctest.h>

#include <cmath>
#include <complex>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/errors.hpp"
#include "ionaddr/mode_solver.hpp"
#include "support/oracles.hpp"

using namespace ionaddr;

namespace {

constexpr double kLambda = 0.532;

std::vector<ModeField> circular_modes(double d, double dx, int n, bool enforce = true) {
  SolverOptions o;
  o.enforce_resolution = enforce;
  return solve_modes(circular_step_profile(d, 1.525, 1.51, Grid::centered_2d(0.5 * d + 1, 0.5 * d + 1, dx, dx)),
                     kLambda, n, o);
}

double slab_neff(double width, double dx, int order) {
  const auto m = solve_modes(slab_step_profile(width, 1.525, 1.51, Grid::centered_1d(0.5 * width + 1, dx)), kLambda,
                             order + 1);
  REQUIRE(static_cast<int>(m.size()) > order);
  return m[static_cast<std::size_t>(order)].n_eff;
}

Complex inner(const ModeField& a, const ModeField& b) {
  Complex s = 0.0;
  for (std::size_t i = 0; i < a.amplitude.size(); ++i) s += std::conj(a.amplitude[i]) * b.amplitude[i];
  return s * a.grid.cell();
}

}  // namespace

TEST_SUITE("mode_solver") {

TEST_CASE("uniform profile guides nothing") {
  CHECK(solve_modes(RIProfile::uniform(Grid::centered_2d(2, 2, 0.05, 0.05), 1.51), kLambda, 3).empty());
  CHECK(solve_modes(RIProfile::uniform(Grid::centered_1d(4, 0.05), 1.51), kLambda, 3).empty());
}

TEST_CASE("coarse lattices and bad arguments are rejected") {
  CHECK_THROWS_AS(circular_modes(1.8, 0.1, 1), DomainError);
  CHECK_THROWS_AS(solve_modes(RIProfile::uniform(Grid::centered_1d(4, 0.05), 1.51), -1.0, 1), DomainError);
}

TEST_CASE("slab modes match the dispersion roots") {
  for (int order = 0; order < 3; ++order) {
    const double ref = oracle::slab_neff(3.0, 1.525, 1.51, kLambda, order);
    CHECK(std::abs(slab_neff(3.0, 0.05, order) - ref) < 1e-4);
  }
  CHECK(std::abs(slab_neff(1.0, 0.05, 0) - oracle::slab_neff(1.0, 1.525, 1.51, kLambda, 0)) < 1e-4);
}

TEST_CASE("slab grid halving converges") {
  const double a = slab_neff(1.0, 0.05, 0), b = slab_neff(1.0, 0.025, 0), c = slab_neff(1.0, 0.0125, 0);
  CHECK(std::abs(c - b) < std::abs(b - a));
  const double ref = oracle::slab_neff(1.0, 1.525, 1.51, kLambda, 0);
  CHECK(std::abs(c - ref) < std::abs(a - ref));
}

TEST_CASE("circular step core: single mode at 1.8 um, LP01 root") {
  const auto m = circular_modes(1.8, 0.05, 3);
  CHECK(oracle::v_number(1.8, 1.525, 1.51, kLambda) < oracle::kBesselJ0Zero);
  REQUIRE(m.size() == 1);
  CHECK(std::abs(m[0].n_eff - oracle::lp01_neff(1.8, 1.525, 1.51, kLambda)) < 1e-4);
  CHECK(m[0].residual < 1e-6);
}

TEST_CASE("circular step core: 2.2 um carries a second mode, modes orthogonal") {
  const auto m = circular_modes(2.2, 0.05, 3);
  CHECK(oracle::v_number(2.2, 1.525, 1.51, kLambda) > oracle::kBesselJ0Zero);
  REQUIRE(m.size() >= 2);
  CHECK(m[0].n_eff > m[1].n_eff);
  CHECK(std::abs(m[0].n_eff - oracle::lp01_neff(2.2, 1.525, 1.51, kLambda)) < 1e-4);
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m[i].norm() == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t j = i + 1; j < m.size(); ++j) CHECK(std::abs(inner(m[i], m[j])) < 1e-6);
  }
}

TEST_CASE("circular grid halving converges") {
  const double a = circular_modes(1.8, 0.1, 1, false)[0].n_eff;
  const double b = circular_modes(1.8, 0.05, 1)[0].n_eff;
  const double c = circular_modes(1.8, 0.025, 1)[0].n_eff;
  CHECK(std::abs(c - b) < std::abs(b - a));
}

TEST_CASE("mfd of an analytic Gaussian is twice its radius") {
  for (double w : {0.7, 1.3}) {
    const auto g = gaussian_mode(Grid::centered_2d(5, 5, 0.05, 0.05), w, kLambda);
    CHECK(mfd(g).x_um == doctest::Approx(2 * w).epsilon(1e-9));
    CHECK(mfd(g).y_um == doctest::Approx(2 * w).epsilon(1e-9));
  }
  const auto g1 = gaussian_mode(Grid::centered_1d(5, 0.05), 1.0, kLambda);
  CHECK(mfd(g1).x_um == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(mfd(g1).y_um == 0.0);
}

TEST_CASE("multiscan output mode and fibre mode sizes") {
  const auto p = build_cross_section(spim_output_design(), Grid::centered_2d(4, 5, 0.05, 0.05));
  const auto m = solve_modes(p, kLambda, 2);
  REQUIRE(m.size() == 1);
  const auto d = mfd(m[0]);
  CHECK(d.x_um >= 1.6);
  CHECK(d.x_um <= 2.1);
  CHECK(d.y_um > d.x_um);

  const auto f = solve_modes(circular_step_profile(3.1, 1.4607, 1.455, Grid::centered_2d(2.6, 2.6, 0.05, 0.05)), kLambda, 2);
  REQUIRE(f.size() == 1);
  CHECK(mfd(f[0]).x_um >= 3.3);
  CHECK(mfd(f[0]).x_um <= 3.9);
}

TEST_CASE("overlap of Gaussians matches closed forms") {
  const Grid g = Grid::centered_2d(8, 8, 0.05, 0.05);
  const auto a = gaussian_mode(g, 1.75, kLambda), b = gaussian_mode(g, 0.95, kLambda);
  CHECK(overlap_efficiency(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(overlap_efficiency(a, b) == doctest::Approx(oracle::gaussian_mismatch(1.75, 0.95)).epsilon(0.01));
  CHECK(overlap_efficiency(a, a, 0.7, 0.0) == doctest::Approx(oracle::gaussian_offset(0.7, 1.75)).epsilon(0.01));

  SUBCASE("symmetric and blind to a global phase") {
    CHECK(overlap_efficiency(a, b) == doctest::Approx(overlap_efficiency(b, a)).epsilon(1e-12));
    auto c = b;
    for (auto& v : c.amplitude) v *= std::polar(1.0, 0.7);
    CHECK(overlap_efficiency(a, c) == doctest::Approx(overlap_efficiency(a, b)).epsilon(1e-12));
  }
  SUBCASE("different lattices") {
    const auto coarse = gaussian_mode(Grid::centered_2d(6, 6, 0.1, 0.1), 0.95, kLambda);
    CHECK(overlap_efficiency(a, coarse) == doctest::Approx(oracle::gaussian_mismatch(1.75, 0.95)).epsilon(0.01));
  }
}

TEST_CASE("coupling Monte Carlo") {
  const Grid g = Grid::centered_2d(8, 8, 0.05, 0.05);
  const auto a = gaussian_mode(g, 1.7, kLambda), b = gaussian_mode(g, 1.2, kLambda);
  const auto zero = vga_coupling_mc(a, b, 0.0, 0.0, 5, 1);
  CHECK(zero.mean_efficiency == doctest::Approx(overlap_efficiency(a, b)).epsilon(1e-12));

  const auto r1 = vga_coupling_mc(a, b, 0.7, 0.3, 16, 42), r2 = vga_coupling_mc(a, b, 0.7, 0.3, 16, 42);
  REQUIRE(r1.samples.size() == 16);
  for (std::size_t k = 0; k < 16; ++k) {
    CHECK(r1.samples[k].dx_um == r2.samples[k].dx_um);
    CHECK(std::abs(r1.samples[k].dx_um) <= 0.7);
    CHECK(std::abs(r1.samples[k].dy_um) <= 0.3);
    CHECK(r1.samples[k].efficiency <= zero.mean_efficiency + 1e-12);
  }
  CHECK(r1.min_efficiency <= r1.mean_efficiency);
  CHECK(r1.mean_efficiency <= r1.max_efficiency);
}

TEST_CASE("single-mode cutoff") {
  CutoffOptions o;
  const double smf = single_mode_cutoff(0.0057, kLambda, 1.455, o);
  CHECK(smf == doctest::Approx(oracle::single_mode_diameter(0.0057, 1.455, kLambda)).epsilon(0.03));
  CHECK(smf == doctest::Approx(3.2).epsilon(0.05));
  const double hi = single_mode_cutoff(0.03, kLambda, 1.51, o);
  CHECK(hi == doctest::Approx(oracle::single_mode_diameter(0.03, 1.51, kLambda)).epsilon(0.03));
  CHECK(single_mode_cutoff(0.06, kLambda, 1.51, o) < hi);
  CHECK_THROWS_AS(single_mode_cutoff(0.0, kLambda, 1.51), DomainError);
}

}  // TEST_SUITE
