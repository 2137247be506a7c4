#include "cfl/curve_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "cfl/error.hpp"
#include "cfl/incentive.hpp"
#include "cfl/seed.hpp"

namespace cfl {
namespace {

double finite_or_inf(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const NelderMeadOptions& options) {
  const std::size_t n = x0.size();
  if (n == 0) throw PreconditionError("nelder_mead needs at least one parameter");
  auto eval = [&](const std::vector<double>& x) { return finite_or_inf(f(x)); };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = x0[i] != 0.0 ? options.initial_step * std::abs(x0[i]) : options.initial_step;
    simplex[i + 1][i] += h;
  }
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  NelderMeadResult result;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double scale = std::max(1.0, std::abs(simplex[best][j]));
        diameter = std::max(diameter, std::abs(simplex[i][j] - simplex[best][j]) / scale);
      }
    }
    if (std::isfinite(values[worst]) && values[worst] - values[best] <= options.f_tolerance &&
        diameter <= options.x_tolerance) {
      result.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    for (std::size_t j = 0; j < n; ++j) trial[j] = centroid[j] + (centroid[j] - simplex[worst][j]);
    const double fr = eval(trial);
    if (fr < values[best]) {
      for (std::size_t j = 0; j < n; ++j) trial2[j] = centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        values[worst] = fe;
      } else {
        simplex[worst] = trial;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = trial;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    for (std::size_t j = 0; j < n; ++j) {
      trial2[j] = outside ? centroid[j] + 0.5 * (trial[j] - centroid[j])
                          : centroid[j] + 0.5 * (simplex[worst][j] - centroid[j]);
    }
    const double fc = eval(trial2);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = it;
  return result;
}

CurveModel parse_curve_model(std::string_view name) {
  if (name == "accuracy" || name == "accuracy_curve") return CurveModel::kAccuracy;
  if (name == "quality" || name == "data_quality") return CurveModel::kQuality;
  throw ConfigError("unknown curve model '" + std::string(name) + "' (expected accuracy or quality)");
}

std::string_view curve_model_name(CurveModel model) {
  return model == CurveModel::kAccuracy ? "accuracy" : "quality";
}

std::size_t parameter_count(CurveModel model) { return model == CurveModel::kAccuracy ? 5 : 3; }

std::size_t input_count(CurveModel model) { return model == CurveModel::kAccuracy ? 2 : 1; }

double predict(CurveModel model, std::span<const double> params, std::span<const double> inputs) {
  if (params.size() != parameter_count(model) || inputs.size() != input_count(model)) {
    throw PreconditionError("parameter or input count does not match the curve model");
  }
  if (model == CurveModel::kAccuracy) {
    return params[0] + params[1] * inputs[1] - params[2] * std::exp(-params[3] * std::pow(1e-3 * inputs[0], params[4]));
  }
  return 1.0 - params[0] * std::exp(-params[1] * std::pow(inputs[0], params[2]));
}

std::vector<double> default_params(CurveModel model) {
  if (model == CurveModel::kAccuracy) {
    const AccuracyCurveParams p;
    return {p.beta1, p.beta2, p.beta3, p.beta4, p.beta5};
  }
  const QualityParams p;
  return {p.gamma1, p.gamma2, p.gamma4};
}

FitResult fit_curve(std::span<const FitSample> samples, CurveModel model, std::vector<double> init,
                    const FitOptions& options) {
  const std::size_t k = parameter_count(model);
  if (init.size() != k) throw PreconditionError("initial parameter vector has the wrong length");
  if (samples.size() < k) {
    throw PreconditionError("curve fit needs at least " + std::to_string(k) + " samples, got " +
                            std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (s.inputs.size() != input_count(model)) throw PreconditionError("sample has the wrong number of inputs");
  }
  auto mse = [&](std::span<const double> params) {
    double acc = 0.0;
    for (const auto& s : samples) {
      const double r = predict(model, params, s.inputs) - s.target;
      acc += r * r;
    }
    return acc / static_cast<double>(samples.size());
  };

  Rng rng(derive_seed(options.seed, SeedStream::kFit));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  FitResult best;
  best.rmse = std::numeric_limits<double>::infinity();
  const std::size_t starts = std::max<std::size_t>(1, options.starts);
  for (std::size_t start = 0; start < starts; ++start) {
    std::vector<double> x0 = init;
    if (start > 0) {
      for (double& v : x0) v *= 1.0 + options.start_spread * jitter(rng);
    }
    NelderMeadResult run = nelder_mead(mse, x0, options.nm);
    std::size_t iterations = run.iterations;
    for (std::size_t r = 0; r < options.restarts; ++r) {
      NelderMeadResult again = nelder_mead(mse, run.x, options.nm);
      iterations += again.iterations;
      const bool stalled = !(again.value < run.value);
      if (again.value <= run.value) run = again;
      if (stalled && run.converged) break;
    }
    const double rmse = std::sqrt(run.value);
    if (rmse < best.rmse) {
      best.params = run.x;
      best.rmse = rmse;
      best.converged = run.converged;
    }
    best.iterations += iterations;
  }
  return best;
}

std::vector<FitSample> read_fit_samples(std::istream& in, CurveModel model) {
  const std::size_t width = input_count(model) + 1;
  std::vector<FitSample> out;
  std::string line;
  std::size_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("non-numeric CSV field '" + cell + "'", line_offset);
      }
    }
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " CSV fields, got " + std::to_string(fields.size()),
                       line_offset);
    }
    FitSample s;
    s.target = fields.back();
    fields.pop_back();
    s.inputs = std::move(fields);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw PreconditionError("no samples in fit input");
  return out;
}

}  // namespace cfl
