#include "ionaddr/measurement_analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace ionaddr {

HDRImage hdr_compose(std::span<const ExposureFrame> frames, double saturation_fraction) {
  if (frames.empty()) throw DomainError("hdr_compose: no frames");
  const std::size_t rows = frames[0].image.rows, cols = frames[0].image.cols;
  for (const auto& f : frames) {
    if (f.image.rows != rows || f.image.cols != cols || f.image.data.size() != rows * cols)
      throw DomainError("hdr_compose: frame dimensions differ");
    if (!(f.scale > 0.0)) throw DomainError("hdr_compose: scale must be positive");
    if (!(f.saturation_level > 0.0)) throw DomainError("hdr_compose: saturation level must be positive");
  }
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].scale > frames[b].scale; });

  HDRImage out;
  out.composite = Image(rows, cols);
  out.valid.assign(rows * cols, 0);
  out.source.assign(rows * cols, -1);
  for (std::size_t p = 0; p < rows * cols; ++p)
    for (std::size_t k : order) {
      const auto& f = frames[k];
      const double v = f.image.data[p];
      if (v < saturation_fraction * f.saturation_level) {
        out.composite.data[p] = std::max(0.0, v) / f.scale;
        out.valid[p] = 1;
        out.source[p] = static_cast<int>(k);
        break;
      }
    }
  return out;
}

LineProfile line_profile(const HDRImage& img, std::size_t row, std::size_t band, double pixel_um, double x0_um) {
  const auto& c = img.composite;
  if (row >= c.rows) throw DomainError("line_profile: row outside the image");
  const std::size_t half = band / 2;
  const std::size_t r0 = row >= half ? row - half : 0;
  const std::size_t r1 = std::min(c.rows, row + (band - half));
  LineProfile lp;
  for (std::size_t col = 0; col < c.cols; ++col) {
    double s = 0.0;
    int n = 0;
    for (std::size_t r = r0; r < r1; ++r)
      if (img.is_valid(r, col)) {
        s += c.at(r, col);
        ++n;
      }
    if (n == 0) continue;
    lp.x_um.push_back(x0_um + pixel_um * static_cast<double>(col));
    lp.intensity.push_back(s / n);
  }
  return lp;
}

double GaussFit::model(double x) const {
  double v = background;
  for (const auto& p : peaks) {
    const double d = (x - p.center_um) / p.waist_um;
    v += p.amplitude * std::exp(-2.0 * d * d);
  }
  return v;
}

namespace {

GaussFit unpack(const Eigen::VectorXd& p, int n_peaks, bool bg) {
  GaussFit f;
  for (int k = 0; k < n_peaks; ++k) f.peaks.push_back({p(3 * k), p(3 * k + 1), std::abs(p(3 * k + 2))});
  f.background = bg ? p(3 * n_peaks) : 0.0;
  return f;
}

void residual_and_jacobian(const Eigen::VectorXd& p, std::span<const double> x, std::span<const double> y, int n_peaks,
                           bool bg, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
  const auto m = static_cast<Eigen::Index>(x.size());
  r.resize(m);
  if (jac) jac->resize(m, p.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    double v = bg ? p(3 * n_peaks) : 0.0;
    for (int k = 0; k < n_peaks; ++k) {
      const double a = p(3 * k), c = p(3 * k + 1), w = p(3 * k + 2);
      const double d = x[static_cast<std::size_t>(i)] - c;
      const double e = std::exp(-2.0 * d * d / (w * w));
      v += a * e;
      if (jac) {
        (*jac)(i, 3 * k) = e;
        (*jac)(i, 3 * k + 1) = a * e * 4.0 * d / (w * w);
        (*jac)(i, 3 * k + 2) = a * e * 4.0 * d * d / (w * w * w);
      }
    }
    if (jac && bg) (*jac)(i, 3 * n_peaks) = 1.0;
    r(i) = v - y[static_cast<std::size_t>(i)];
  }
}

std::vector<GaussPeak> initial_peaks(std::span<const double> x, std::span<const double> y, int n_peaks,
                                     double min_sep) {
  const std::size_t m = x.size();
  const double dx = std::abs(x[m - 1] - x[0]) / static_cast<double>(m - 1);
  if (min_sep <= 0.0) min_sep = 3.0 * dx;
  const double floor = *std::min_element(y.begin(), y.end());
  std::vector<std::size_t> maxima;
  for (std::size_t i = 0; i < m; ++i) {
    const bool left = i == 0 || y[i] >= y[i - 1];
    const bool right = i + 1 == m || y[i] > y[i + 1];
    if (left && right) maxima.push_back(i);
  }
  std::sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<GaussPeak> out;
  for (std::size_t i : maxima) {
    if (static_cast<int>(out.size()) == n_peaks) break;
    const bool far = std::all_of(out.begin(), out.end(),
                                 [&](const GaussPeak& p) { return std::abs(p.center_um - x[i]) >= min_sep; });
    if (!far) continue;
    const double height = y[i] - floor;
    // Half-maximum crossings give the width: w = FWHM / sqrt(2 ln 2).
    std::size_t lo = i, hi = i;
    while (lo > 0 && y[lo] - floor > 0.5 * height) --lo;
    while (hi + 1 < m && y[hi] - floor > 0.5 * height) ++hi;
    const double fwhm = std::max(std::abs(x[hi] - x[lo]), 2.0 * dx);
    out.push_back({height, x[i], fwhm / std::sqrt(2.0 * std::log(2.0))});
  }
  if (static_cast<int>(out.size()) < n_peaks)
    throw DomainError("multi_gauss_fit: fewer well-separated maxima than peaks; supply an initial guess");
  return out;
}

}  // namespace

GaussFit multi_gauss_fit(std::span<const double> x, std::span<const double> y, int n_peaks,
                         const std::vector<GaussPeak>* init, const FitOptions& opts) {
  if (n_peaks < 1) throw DomainError("multi_gauss_fit: n_peaks must be >= 1");
  if (x.size() != y.size()) throw DomainError("multi_gauss_fit: x and y differ in length");
  if (x.size() < 4 * static_cast<std::size_t>(n_peaks))
    throw DomainError("multi_gauss_fit: need at least 4 samples per peak");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DomainError("multi_gauss_fit: non-finite sample");

  const bool bg = opts.fit_background;
  const std::vector<GaussPeak> seed =
      init ? *init : initial_peaks(x, y, n_peaks, opts.min_separation_um);
  if (static_cast<int>(seed.size()) != n_peaks) throw DomainError("multi_gauss_fit: initial guess size mismatch");
  const Eigen::Index np = 3 * n_peaks + (bg ? 1 : 0);
  Eigen::VectorXd p(np);
  for (int k = 0; k < n_peaks; ++k) {
    p(3 * k) = seed[static_cast<std::size_t>(k)].amplitude;
    p(3 * k + 1) = seed[static_cast<std::size_t>(k)].center_um;
    p(3 * k + 2) = seed[static_cast<std::size_t>(k)].waist_um;
  }
  if (bg) p(3 * n_peaks) = init ? 0.0 : *std::min_element(y.begin(), y.end());

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residual_and_jacobian(p, x, y, n_peaks, bg, r, &jac);
  double cost = 0.5 * r.squaredNorm();
  double scale2 = 0.0;
  for (double v : y) scale2 += v * v;
  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  auto fail = [&](const std::string& why) {
    GaussFit last = unpack(p, n_peaks, bg);
    last.iterations = it;
    last.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(x.size()));
    throw FitError("multi_gauss_fit: " + why, last.residual_rms, it, std::move(last));
  };
  for (; it < opts.max_iterations && !converged; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    const Eigen::VectorXd d = jtj.diagonal();
    if ((d.array() <= 0.0).any()) fail("singular normal equations");
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * d;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = -ldlt.solve(g);
      if (!step.allFinite()) fail("singular normal equations");
      Eigen::VectorXd trial = p + step;
      Eigen::VectorXd rt;
      residual_and_jacobian(trial, x, y, n_peaks, bg, rt, nullptr);
      const double ct = 0.5 * rt.squaredNorm();
      if (std::isfinite(ct) && ct <= cost) {
        const double change = cost - ct;
        const bool tiny_step = step.norm() <= 1e-14 * (p.norm() + 1e-14);
        p = trial;
        residual_and_jacobian(p, x, y, n_peaks, bg, r, &jac);
        converged = change <= opts.relative_tolerance * cost || ct <= 1e-30 * scale2 || tiny_step;
        cost = ct;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      converged = true;
    }
  }
  if (!converged) fail("no convergence within the iteration limit");

  GaussFit f = unpack(p, n_peaks, bg);
  f.iterations = it;
  const auto m = static_cast<double>(x.size());
  f.residual_rms = std::sqrt(2.0 * cost / m);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::VectorXd colnorm = jac.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < colnorm.size(); ++k)
    if (!(colnorm(k) > 0.0)) fail("singular normal equations");
  const Eigen::MatrixXd scaled = jac * colnorm.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  const auto& sv = svd.singularValues();
  f.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  f.ill_conditioned = !(f.condition_number <= opts.ill_condition_threshold);
  const double dof = std::max(1.0, m - static_cast<double>(np));
  const double s2 = 2.0 * cost / dof;
  Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
  f.uncertainty.resize(static_cast<std::size_t>(np));
  for (Eigen::Index k = 0; k < np; ++k) f.uncertainty[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, s2 * cov(k, k)));
  return f;
}

CrosstalkMetrics crosstalk_metrics(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> centers, int injected, double pitch_um) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("crosstalk_metrics: bad profile");
  if (injected < 0 || static_cast<std::size_t>(injected) >= centers.size())
    throw DomainError("crosstalk_metrics: injected channel out of range");
  if (pitch_um <= 0.0) {
    if (centers.size() < 2) throw DomainError("crosstalk_metrics: pitch required for a single channel");
    pitch_um = std::abs(centers.back() - centers.front()) / static_cast<double>(centers.size() - 1);
  }
  const double c0 = centers[static_cast<std::size_t>(injected)];
  std::vector<double> wx, wy;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(x[i] - c0) <= pitch_um) {
      wx.push_back(x[i]);
      wy.push_back(y[i]);
    }
  CrosstalkMetrics out;
  const GaussFit fit = multi_gauss_fit(wx, wy, 1);
  out.injected_peak = fit.peaks[0].amplitude + fit.background;
  // A non-Gaussian beam tail leaks into the fitted constant; the dark level of
  // the whole profile caps it.
  std::vector<double> sorted(y.begin(), y.end());
  const auto q = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 20);
  std::nth_element(sorted.begin(), q, sorted.end());
  out.background = std::min(fit.background, *q);

  auto value_at = [&](double c) {
    // Linear interpolation on the (sorted) sample positions.
    const auto it = std::lower_bound(x.begin(), x.end(), c);
    if (it == x.begin()) return y.front();
    if (it == x.end()) return y.back();
    const auto i = static_cast<std::size_t>(it - x.begin());
    const double t = (c - x[i - 1]) / (x[i] - x[i - 1]);
    return (1.0 - t) * y[i - 1] + t * y[i];
  };
  auto window_power = [&](double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(x[i] - c) <= 0.5 * pitch_um) s += y[i] - out.background;
    return s;
  };
  const double ref_power = window_power(c0);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (static_cast<int>(k) == injected) continue;
    out.channel.push_back(static_cast<int>(k));
    out.peak_ratio.push_back(out.injected_peak > 0.0 ? value_at(centers[k]) / out.injected_peak : 0.0);
    out.integrated_ratio.push_back(ref_power > 0.0 ? std::max(0.0, window_power(centers[k])) / ref_power : 0.0);
  }
  return out;
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("read_pgm: cannot open " + path);
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P5") throw DomainError("read_pgm: not a binary PGM (P5): " + path);
  const std::size_t cols = std::stoul(token()), rows = std::stoul(token());
  const int maxval = std::stoi(token());
  if (maxval <= 0 || maxval > 65535) throw DomainError("read_pgm: bad maxval in " + path);
  Image img(rows, cols);
  const bool wide = maxval > 255;
  for (auto& v : img.data) {
    unsigned char b[2] = {0, 0};
    in.read(reinterpret_cast<char*>(b), wide ? 2 : 1);
    if (!in) throw DomainError("read_pgm: truncated data in " + path);
    v = wide ? static_cast<double>((b[0] << 8) | b[1]) : static_cast<double>(b[0]);
  }
  return img;
}

void write_pgm(const std::string& path, const Image& img, int maxval) {
  if (maxval <= 0 || maxval > 65535) throw DomainError("write_pgm: bad maxval");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("write_pgm: cannot open " + path);
  out << "P5\n" << img.cols << ' ' << img.rows << '\n' << maxval << '\n';
  const bool wide = maxval > 255;
  for (double v : img.data) {
    const auto q = static_cast<unsigned>(std::clamp(std::lround(v), 0L, static_cast<long>(maxval)));
    if (wide) out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xff));
  }
}

Image read_csv_image(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("read_csv_image: cannot open " + path);
  Image img;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      img.data.push_back(std::stod(cell));
      ++n;
    }
    if (img.rows == 0) img.cols = n;
    else if (n != img.cols) throw DomainError("read_csv_image: ragged rows in " + path);
    ++img.rows;
  }
  return img;
}

std::vector<ExposureFrame> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("read_manifest: cannot open " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ExposureFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string file, scale, sat;
    if (!std::getline(ss, file, ',') || !std::getline(ss, scale, ',') || !std::getline(ss, sat, ','))
      throw DomainError("read_manifest: expected 'path, scale, saturation_level': " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    std::filesystem::path f = trim(file);
    if (f.is_relative()) f = base / f;
    ExposureFrame fr;
    fr.image = f.extension() == ".csv" ? read_csv_image(f.string()) : read_pgm(f.string());
    fr.scale = std::stod(trim(scale));
    fr.saturation_level = std::stod(trim(sat));
    frames.push_back(std::move(fr));
  }
  return frames;
}

}  // namespace ionaddr
