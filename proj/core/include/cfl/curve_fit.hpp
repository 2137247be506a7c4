#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <span>
#include <string_view>
#include <vector>

namespace cfl {

// ---------------------------------------------------------------------------
// Nelder-Mead simplex minimizer
// ---------------------------------------------------------------------------

struct NelderMeadOptions {
  std::size_t max_iterations = 20000;
  /// Stop when the spread of simplex values and the simplex diameter both fall below these.
  double f_tolerance = 1e-16;
  double x_tolerance = 1e-10;
  /// Initial simplex edge, relative to each coordinate (absolute for zero coordinates).
  double initial_step = 0.1;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Minimizes `f` from `x0` with standard coefficients (1, 2, 0.5, 0.5).
/// Non-finite objective values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const NelderMeadOptions& options = {});

// ---------------------------------------------------------------------------
// Curve models
// ---------------------------------------------------------------------------

enum class CurveModel {
  /// q(e, theta) = b1 + b2 theta - b3 exp(-b4 (e/1000)^b5); inputs (e, theta), params b1..b5.
  kAccuracy,
  /// theta(x) = 1 - g1 exp(-g2 x^g4) with x = d - g3 s; input x, params (g1, g2, g4).
  kQuality,
};

CurveModel parse_curve_model(std::string_view name);
std::string_view curve_model_name(CurveModel model);
std::size_t parameter_count(CurveModel model);
std::size_t input_count(CurveModel model);
double predict(CurveModel model, std::span<const double> params, std::span<const double> inputs);

struct FitSample {
  std::vector<double> inputs;
  double target = 0.0;
};

struct FitOptions {
  std::size_t starts = 8;
  /// Restarts from the best vertex after each converged run, to escape collapsed simplices.
  std::size_t restarts = 4;
  /// Multiplicative jitter of non-initial starting points: x0 * (1 + spread U(-1, 1)).
  double start_spread = 0.5;
  std::uint64_t seed = 0;
  NelderMeadOptions nm{};
};

struct FitResult {
  std::vector<double> params;
  double rmse = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Least-squares fit by seeded multi-start Nelder-Mead.
/// Throws PreconditionError when there are fewer samples than parameters.
FitResult fit_curve(std::span<const FitSample> samples, CurveModel model, std::vector<double> init,
                    const FitOptions& options = {});

/// Reads CSV samples: a header line, then `input..., target` rows.
/// Throws ParseError on malformed rows and PreconditionError on an empty body.
std::vector<FitSample> read_fit_samples(std::istream& in, CurveModel model);

/// Starting point taken from the AccuracyCurveParams / QualityParams defaults.
std::vector<double> default_params(CurveModel model);

}  // namespace cfl
