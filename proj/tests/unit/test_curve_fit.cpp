#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cfl/curve_fit.hpp"
#include "cfl/error.hpp"
#include "cfl/incentive.hpp"

namespace cfl {
namespace {

TEST(NelderMead, Rosenbrock) {
  const auto rosen = [](std::span<const double> x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  const auto res = nelder_mead(rosen, {-1.2, 1.0});
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.x[0], 1.0, 1e-4);
  EXPECT_NEAR(res.x[1], 1.0, 1e-4);
}

TEST(NelderMead, NonFiniteValuesAreAvoided) {
  const auto f = [](std::span<const double> x) { return x[0] < 0 ? NAN : (x[0] - 2.0) * (x[0] - 2.0); };
  const auto res = nelder_mead(f, {0.5});
  EXPECT_NEAR(res.x[0], 2.0, 1e-5);
}

TEST(CurveModel, PredictMatchesTheIncentiveCurves) {
  const AccuracyCurveParams acp;
  const std::vector<double> p = default_params(CurveModel::kAccuracy);
  const double in[] = {5000.0, 0.9};
  EXPECT_DOUBLE_EQ(predict(CurveModel::kAccuracy, p, in), accuracy_curve(5000.0, 0.9, acp));
  const QualityParams qp;
  const std::vector<double> g = default_params(CurveModel::kQuality);
  const double x[] = {1000.0};
  EXPECT_NEAR(predict(CurveModel::kQuality, g, x), data_quality(1000, 0.0, qp), 1e-15);
  EXPECT_EQ(parse_curve_model("quality"), CurveModel::kQuality);
  EXPECT_THROW(parse_curve_model("cubic"), ConfigError);
}

std::vector<FitSample> accuracy_samples(const std::vector<double>& truth, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise > 0 ? noise : 1.0);
  std::vector<FitSample> out;
  for (double e = 500.0; e <= 20000.0; e += 500.0) {
    for (double th : {0.2, 0.5, 0.8, 1.0}) {
      FitSample s{{e, th}, 0.0};
      s.target = predict(CurveModel::kAccuracy, truth, s.inputs) + (noise > 0 ? n(rng) : 0.0);
      out.push_back(s);
    }
  }
  return out;
}

TEST(FitCurve, RecoversNoiselessAccuracyCurve) {
  const std::vector<double> truth{0.4, 0.45, 0.42, 0.012, 2.2};
  const auto samples = accuracy_samples(truth, 0.0, 1);
  FitOptions opt;
  opt.seed = 3;
  const auto fit = fit_curve(samples, CurveModel::kAccuracy, default_params(CurveModel::kAccuracy), opt);
  EXPECT_LT(fit.rmse, 1e-3);
}

TEST(FitCurve, NoisyFitStaysNearNoiseLevel) {
  const std::vector<double> truth{0.459, 0.432, 0.459, 0.009, 2.436};
  const auto samples = accuracy_samples(truth, 0.005, 9);
  const auto fit = fit_curve(samples, CurveModel::kAccuracy, default_params(CurveModel::kAccuracy), {});
  EXPECT_LT(fit.rmse, 0.0075);
}

TEST(FitCurve, Deterministic) {
  const auto samples = accuracy_samples({0.4, 0.45, 0.42, 0.012, 2.2}, 0.002, 4);
  const auto a = fit_curve(samples, CurveModel::kAccuracy, default_params(CurveModel::kAccuracy), {});
  const auto b = fit_curve(samples, CurveModel::kAccuracy, default_params(CurveModel::kAccuracy), {});
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.rmse, b.rmse);
}

TEST(FitCurve, QualityCurveOnConstantTarget) {
  // theta = 1 - g1 exp(-g2 x^g4) is constant 0.9 exactly when g1 exp(-g2 x^g4) = 0.1 everywhere;
  // g4 -> 0 reaches it in the limit, so the fit must drive the residual close to zero.
  std::vector<FitSample> samples;
  for (double x = 100; x <= 5000; x += 100) samples.push_back({{x}, 0.9});
  const auto fit = fit_curve(samples, CurveModel::kQuality, default_params(CurveModel::kQuality), {});
  EXPECT_LT(fit.rmse, 1e-3);
}

TEST(FitCurve, UnderdeterminedInputThrows) {
  std::vector<FitSample> samples{{{1000.0, 0.5}, 0.5}, {{2000.0, 0.5}, 0.6}};
  EXPECT_THROW(fit_curve(samples, CurveModel::kAccuracy, default_params(CurveModel::kAccuracy), {}),
               PreconditionError);
}

TEST(ReadFitSamples, ParsesAndRejects) {
  std::istringstream ok("e,theta,acc\n1000,0.5,0.61\n2000,0.5,0.7\n");
  const auto s = read_fit_samples(ok, CurveModel::kAccuracy);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].inputs[0], 2000.0);
  EXPECT_EQ(s[1].target, 0.7);
  std::istringstream bad("e,theta,acc\n1000,0.5\n");
  EXPECT_THROW(read_fit_samples(bad, CurveModel::kAccuracy), ParseError);
  std::istringstream word("x,theta\n12,abc\n");
  EXPECT_THROW(read_fit_samples(word, CurveModel::kQuality), ParseError);
  std::istringstream empty("x,theta\n");
  EXPECT_THROW(read_fit_samples(empty, CurveModel::kQuality), PreconditionError);
}

}  // namespace
}  // namespace cfl
