#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ionaddr/measurement_analysis.hpp"

using namespace ionaddr;
namespace fs = std::filesystem;

namespace {

double gauss(double x, double c, double w) { return std::exp(-2.0 * (x - c) * (x - c) / (w * w)); }

Image spot(std::size_t rows, std::size_t cols, double peak, double sigma_px, double floor) {
  Image img(rows, cols);
  const double r0 = 0.5 * static_cast<double>(rows - 1), c0 = 0.5 * static_cast<double>(cols - 1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(c) - c0;
      img.at(r, c) = floor + peak * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma_px * sigma_px));
    }
  return img;
}

/// Camera frame: scaled, rounded to counts, clipped at full well.
ExposureFrame expose(const Image& truth, double scale) {
  ExposureFrame f{truth, scale, 65535.0};
  for (auto& v : f.image.data) v = std::min(65535.0, std::round(v * scale));
  return f;
}

std::vector<double> comb(const std::vector<double>& x, int n, double pitch, double w, double amp = 1.0) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < n; ++k) y[i] += amp * gauss(x[i], (k - 0.5 * (n - 1)) * pitch, w);
  return y;
}

std::vector<double> axis(double lo, double hi, double step) {
  std::vector<double> x;
  for (double v = lo; v <= hi + 1e-9; v += step) x.push_back(v);
  return x;
}

fs::path scratch(const char* leaf) {
  const auto d = fs::temp_directory_path() / "ionaddr_unit" / leaf;
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("measurement_analysis") {

TEST_CASE("single unsaturated frame passes straight through") {
  const Image img = spot(20, 30, 1000.0, 4.0, 10.0);
  const ExposureFrame f{img, 1.0};
  const auto h = hdr_compose(std::span<const ExposureFrame>(&f, 1));
  CHECK(h.composite.data == img.data);
  CHECK(std::all_of(h.valid.begin(), h.valid.end(), [](auto v) { return v == 1; }));
}

TEST_CASE("three-exposure stack recovers a bright spot") {
  const Image truth = spot(41, 61, 30000.0, 5.0, 1.0);
  const std::vector<ExposureFrame> frames{expose(truth, 1.0), expose(truth, 100.0), expose(truth, 2000.0)};
  const auto h = hdr_compose(frames);
  double worst = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    if (!h.valid[i]) continue;
    ++valid;
    worst = std::max(worst, std::abs(h.composite.data[i] - truth.data[i]) / truth.data[i]);
  }
  CHECK(valid == truth.data.size());
  CHECK(worst < 0.01);
  CHECK(h.source[20 * 61 + 30] == 0);
  CHECK(h.source[0] == 2);
}

TEST_CASE("pixels saturated in every frame are masked") {
  Image truth = spot(9, 9, 100.0, 2.0, 1.0);
  truth.at(4, 4) = 1e6;
  const std::vector<ExposureFrame> frames{expose(truth, 1.0), expose(truth, 100.0)};
  const auto h = hdr_compose(frames);
  CHECK_FALSE(h.is_valid(4, 4));
  CHECK(h.is_valid(4, 3));
  const auto lp = line_profile(h, 4, 1);
  CHECK(lp.x_um.size() == 8);
  CHECK(std::find(lp.x_um.begin(), lp.x_um.end(), 4.0) == lp.x_um.end());
}

TEST_CASE("composition is scale-equivariant") {
  const Image truth = spot(21, 21, 30000.0, 3.0, 1.0);
  std::vector<ExposureFrame> a{expose(truth, 1.0), expose(truth, 100.0)};
  auto b = a;
  for (auto& f : b) {
    for (auto& v : f.image.data) v *= 3.0;
    f.saturation_level *= 3.0;
  }
  const auto ha = hdr_compose(a), hb = hdr_compose(b);
  CHECK(ha.valid == hb.valid);
  for (std::size_t i = 0; i < ha.composite.data.size(); ++i)
    CHECK(hb.composite.data[i] == doctest::Approx(3.0 * ha.composite.data[i]).epsilon(1e-12));
}

TEST_CASE("line profiles") {
  SUBCASE("constant image") {
    HDRImage h{Image(5, 12, 7.0), std::vector<std::uint8_t>(60, 1), std::vector<int>(60, 0)};
    const auto lp = line_profile(h, 2, 3, 0.5, -1.0);
    REQUIRE(lp.x_um.size() == 12);
    CHECK(lp.x_um[1] == doctest::Approx(-0.5));
    for (double v : lp.intensity) CHECK(v == 7.0);
  }
  SUBCASE("band average of a y-invariant stripe equals the midline") {
    Image img(7, 50);
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 50; ++c) img.at(r, c) = gauss(static_cast<double>(c), 25.3, 4.0);
    HDRImage h{img, std::vector<std::uint8_t>(350, 1), std::vector<int>(350, 0)};
    const auto lp = line_profile(h, 3, 5);
    for (std::size_t c = 0; c < 50; ++c) CHECK(std::abs(lp.intensity[c] - img.at(3, c)) < 1e-12);
  }
  SUBCASE("eight spots give eight maxima at 8 um") {
    const double px = 0.25;
    Image img(11, 320);
    for (std::size_t r = 0; r < 11; ++r)
      for (std::size_t c = 0; c < 320; ++c) {
        const double x = px * static_cast<double>(c) - 40.0, y = px * (static_cast<double>(r) - 5.0);
        double v = 0.0;
        for (int k = 0; k < 8; ++k) v += gauss(x, (k - 3.5) * 8.0, 1.0) * std::exp(-2.0 * y * y);
        img.at(r, c) = v;
      }
    HDRImage h{img, std::vector<std::uint8_t>(img.data.size(), 1), std::vector<int>(img.data.size(), 0)};
    const auto lp = line_profile(h, 5, 3, px, -40.0);
    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < lp.intensity.size(); ++i)
      if (lp.intensity[i] > lp.intensity[i - 1] && lp.intensity[i] >= lp.intensity[i + 1] && lp.intensity[i] > 0.1)
        peaks.push_back(lp.x_um[i]);
    REQUIRE(peaks.size() == 8);
    for (std::size_t k = 1; k < 8; ++k) CHECK(peaks[k] - peaks[k - 1] == doctest::Approx(8.0));
  }
}

TEST_CASE("single Gaussian fit is exact on its own model") {
  const auto x = axis(-3.0, 3.0, 0.05);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gauss(x[i], 0.0, 0.67);
  const auto f = multi_gauss_fit(x, y, 1);
  REQUIRE(f.peaks.size() == 1);
  CHECK(std::abs(f.peaks[0].amplitude - 1.0) < 1e-6);
  CHECK(std::abs(f.peaks[0].center_um) < 1e-6);
  CHECK(std::abs(f.peaks[0].waist_um - 0.67) < 1e-6);
  CHECK(std::abs(f.background) < 1e-6);
  CHECK_FALSE(f.ill_conditioned);
}

TEST_CASE("eight-peak scan with 1% noise") {
  const auto x = axis(-18.0, 18.0, 0.1);
  auto y = comb(x, 8, 3.95, 0.67);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 0.01);
  for (auto& v : y) v += nd(rng);
  const auto f = multi_gauss_fit(x, y, 8);
  REQUIRE(f.peaks.size() == 8);
  auto p = f.peaks;
  std::sort(p.begin(), p.end(), [](auto& a, auto& b) { return a.center_um < b.center_um; });
  double w = 0.0;
  for (auto& q : p) w += q.waist_um / 8.0;
  CHECK(w == doctest::Approx(0.67).epsilon(0.03 / 0.67));
  CHECK((p.back().center_um - p.front().center_um) / 7.0 == doctest::Approx(3.95).epsilon(0.02 / 3.95));
  CHECK(f.uncertainty.size() == 8 * 3 + 1);
}

TEST_CASE("overlapping peaks are flagged ill-conditioned") {
  const auto x = axis(-4.0, 4.0, 0.05);
  const double w = 1.0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gauss(x[i], -0.1 * w, w) + gauss(x[i], 0.1 * w, w);
  const std::vector<GaussPeak> init{{1.0, -0.3, 1.0}, {1.0, 0.3, 1.0}};
  const std::vector<double> xw(x.begin(), x.end());
  GaussFit f;
  try {
    f = multi_gauss_fit(xw, y, 2, &init);
  } catch (const FitError& e) {
    f = e.last_iterate();
  }
  CHECK(f.ill_conditioned);
  CHECK(f.condition_number > 1e3);

  const auto xs = axis(-8.0, 8.0, 0.05);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = gauss(xs[i], -3.0, w) + gauss(xs[i], 3.0, w);
  const auto g = multi_gauss_fit(xs, ys, 2);
  CHECK_FALSE(g.ill_conditioned);
  CHECK(f.condition_number > 10.0 * g.condition_number);
}

TEST_CASE("fit is translation-equivariant and self-consistent") {
  const auto x = axis(-10.0, 10.0, 0.1);
  auto y = comb(x, 3, 4.0, 0.8);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += 0.02 * std::sin(3.0 * x[i]);
  const auto f = multi_gauss_fit(x, y, 3);
  std::vector<double> xs(x);
  for (auto& v : xs) v += 1.3;
  const auto g = multi_gauss_fit(xs, y, 3);
  auto by_c = [](auto& a, auto& b) { return a.center_um < b.center_um; };
  auto pf = f.peaks, pg = g.peaks;
  std::sort(pf.begin(), pf.end(), by_c);
  std::sort(pg.begin(), pg.end(), by_c);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(pg[k].center_um - pf[k].center_um - 1.3) < 1e-9);

  std::vector<double> ym(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ym[i] = f.model(x[i]);
  const auto h = multi_gauss_fit(x, ym, 3, &f.peaks);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(h.peaks[k].center_um - f.peaks[k].center_um) < 1e-9);
    CHECK(std::abs(h.peaks[k].waist_um - f.peaks[k].waist_um) < 1e-9);
    CHECK(std::abs(h.peaks[k].amplitude - f.peaks[k].amplitude) < 1e-9);
  }
}

TEST_CASE("fit rejects impossible requests") {
  const auto x = axis(-3.0, 3.0, 0.1);
  const std::vector<double> flat(x.size(), 1.0);
  CHECK_THROWS_AS(multi_gauss_fit(x, flat, 2), DomainError);
  CHECK_THROWS_AS(multi_gauss_fit(x, flat, 0), DomainError);
}

TEST_CASE("cross-talk metrics") {
  const auto x = axis(-32.0, 32.0, 0.05);
  std::vector<double> centers;
  for (int k = 0; k < 8; ++k) centers.push_back((k - 3.5) * 8.0);

  SUBCASE("zero at every neighbour") {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gauss(x[i], centers[3], 1.0);
    const auto m = crosstalk_metrics(x, y, centers, 3);
    CHECK(m.channel.size() == 7);
    for (double r : m.peak_ratio) CHECK(r == doctest::Approx(0.0).epsilon(1e-12));
    for (double r : m.integrated_ratio) CHECK(r < 1e-12);
  }
  SUBCASE("neighbour at 5e-4 and scale invariance") {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = gauss(x[i], centers[3], 1.0) + 5e-4 * (gauss(x[i], centers[2], 1.0) + gauss(x[i], centers[4], 1.0));
    const auto m = crosstalk_metrics(x, y, centers, 3);
    CHECK(m.peak_ratio[2] == doctest::Approx(5e-4).epsilon(0.05));
    CHECK(m.peak_ratio[3] == doctest::Approx(5e-4).epsilon(0.05));
    CHECK(m.integrated_ratio[3] == doctest::Approx(5e-4).epsilon(0.05));
    CHECK(m.integrated_ratio[5] < 1e-6);
    for (auto& v : y) v *= 2.0;
    const auto d = crosstalk_metrics(x, y, centers, 3);
    for (std::size_t k = 0; k < m.channel.size(); ++k) {
      CHECK(d.peak_ratio[k] == doctest::Approx(m.peak_ratio[k]).epsilon(1e-9));
      CHECK(d.integrated_ratio[k] == doctest::Approx(m.integrated_ratio[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("cross-talk metrics see through a non-Gaussian beam tail") {
  const auto x = axis(-32.0, 32.0, 0.05);
  std::vector<double> centers;
  for (int k = 0; k < 8; ++k) centers.push_back((k - 3.5) * 8.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x[i] - centers[3]);
    y[i] = gauss(x[i], centers[3], 1.0) + 3e-3 * std::exp(-d / 1.5) + 1e-3 * (gauss(x[i], centers[2], 1.0) + gauss(x[i], centers[4], 1.0)) + 2.0e-6;
  }
  const auto m = crosstalk_metrics(x, y, centers, 3);
  CHECK(m.background <= 2.0e-6 + 1e-9);
  CHECK(m.integrated_ratio[3] > 5e-4);
  CHECK(m.integrated_ratio[3] < 2e-3);
  CHECK(m.integrated_ratio[5] < m.integrated_ratio[3]);
}

TEST_CASE("image and manifest files") {
  const auto dir = scratch("ma_files");
  Image img(3, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i * 1000);
  write_pgm((dir / "a.pgm").string(), img);
  const auto back = read_pgm((dir / "a.pgm").string());
  CHECK(back.rows == 3);
  CHECK(back.cols == 4);
  CHECK(back.data == img.data);

  std::ofstream((dir / "b.csv").string()) << "1,2,3,4\n5,6,7,8\n9,10,11,12\n";
  const auto csv = read_csv_image((dir / "b.csv").string());
  CHECK(csv.at(2, 3) == 12.0);

  std::ofstream((dir / "stack.txt").string()) << "# path, scale, saturation\na.pgm, 1, 65535\nb.csv, 100, 4095\n";
  const auto frames = read_manifest((dir / "stack.txt").string());
  REQUIRE(frames.size() == 2);
  CHECK(frames[1].scale == 100.0);
  CHECK(frames[1].saturation_level == 4095.0);
  CHECK(frames[0].image.data == img.data);
  CHECK_THROWS_AS(read_manifest((dir / "missing.txt").string()), DomainError);
}

}  // TEST_SUITE
