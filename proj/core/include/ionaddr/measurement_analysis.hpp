#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ionaddr/errors.hpp"

namespace ionaddr {

/// Row-major grey image.
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// One exposure of a stack. `scale` is the intensity multiplier relative to I0.
struct ExposureFrame {
  Image image;
  double scale = 1.0;
  double saturation_level = 65535.0;
};

struct HDRImage {
  /// Intensity in units of I0; invalid pixels hold 0.
  Image composite;
  std::vector<std::uint8_t> valid;
  /// Index of the frame each pixel came from, -1 where invalid.
  std::vector<int> source;

  bool is_valid(std::size_t r, std::size_t c) const { return valid[r * composite.cols + c] != 0; }
};

/// Per pixel, the highest-scale frame whose sample is below
/// saturation_fraction * saturation_level supplies sample / scale. Pixels
/// saturated in every frame are marked invalid.
HDRImage hdr_compose(std::span<const ExposureFrame> frames, double saturation_fraction = 0.95);

struct LineProfile {
  std::vector<double> x_um;
  std::vector<double> intensity;
};

/// Row `row` averaged over `band` rows centred on it, using valid pixels only
/// (columns with no valid pixel in the band are dropped).
LineProfile line_profile(const HDRImage& img, std::size_t row, std::size_t band = 3, double pixel_um = 1.0,
                         double x0_um = 0.0);

/// One Gaussian term A exp(-2 (x - c)^2 / w^2); w is the 1/e^2 intensity radius.
struct GaussPeak {
  double amplitude = 0.0;
  double center_um = 0.0;
  double waist_um = 0.0;
};

struct GaussFit {
  std::vector<GaussPeak> peaks;
  double background = 0.0;
  double residual_rms = 0.0;
  /// Standard errors in parameter order (A, c, w per peak, then background),
  /// from the Gauss-Newton curvature at the solution.
  std::vector<double> uncertainty;
  /// Condition number of the column-scaled Jacobian.
  double condition_number = 0.0;
  bool ill_conditioned = false;
  int iterations = 0;

  double model(double x) const;
};

struct FitOptions {
  double relative_tolerance = 1e-10;
  int max_iterations = 500;
  bool fit_background = true;
  /// Condition numbers above this are flagged.
  double ill_condition_threshold = 1e3;
  /// Minimum distance between automatically chosen initial centres (0: 3 samples).
  double min_separation_um = 0.0;
};

/// Raised when the fit stops without converging or hits singular normal
/// equations; carries the last iterate.
class FitError : public ConvergenceError {
 public:
  FitError(const std::string& what, double residual, int iterations, GaussFit last)
      : ConvergenceError(what, residual, iterations), last_(std::move(last)) {}
  const GaussFit& last_iterate() const noexcept { return last_; }

 private:
  GaussFit last_;
};

/// Least-squares sum of Gaussians plus a constant background by damped
/// Gauss-Newton (Levenberg-Marquardt). Without `init`, the n_peaks largest
/// well-separated local maxima seed the fit.
GaussFit multi_gauss_fit(std::span<const double> x, std::span<const double> y, int n_peaks,
                         const std::vector<GaussPeak>* init = nullptr, const FitOptions& opts = {});

struct CrosstalkMetrics {
  std::vector<int> channel;
  std::vector<double> peak_ratio;
  std::vector<double> integrated_ratio;
  double injected_peak = 0.0;
  double background = 0.0;
};

/// Ratios for every channel other than `injected`. The injected peak comes
/// from a single-Gaussian fit within +/- pitch of its centre; the background is
/// that fit's constant, capped at the 5th percentile of the whole profile.
/// Integrated ratios use +/- pitch/2 windows after background subtraction.
CrosstalkMetrics crosstalk_metrics(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> centers, int injected, double pitch_um = 0.0);

/// Binary 16-bit (or 8-bit) PGM, big-endian samples.
Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& img, int maxval = 65535);

/// Plain numeric CSV matrix; blank lines and lines starting with '#' are skipped.
Image read_csv_image(const std::string& path);

/// Manifest lines: `path, scale, saturation_level`; relative paths resolve
/// against the manifest's directory. '#' starts a comment.
std::vector<ExposureFrame> read_manifest(const std::string& path);

}  // namespace ionaddr
