#include "cfl/incentive.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfl/error.hpp"

namespace cfl {
namespace {

constexpr double kInvPhi = 0.6180339887498948482;  // (sqrt(5) - 1) / 2

void check_level(int level, const MarketModel& market) {
  if (level < 1 || static_cast<std::size_t>(level) > market.levels()) {
    throw PreconditionError("level " + std::to_string(level) + " outside [1, " + std::to_string(market.levels()) +
                            "]");
  }
}

}  // namespace

void QualityParams::validate() const {
  if (!(gamma2 > 0.0) || !(gamma4 > 0.0)) throw ConfigError("quality params need gamma2 > 0 and gamma4 > 0");
}

void AccuracyCurveParams::validate() const {
  if (!(beta3 >= 0.0) || !(beta4 > 0.0) || !(beta5 > 0.0)) {
    throw ConfigError("accuracy curve params need beta3 >= 0, beta4 > 0, beta5 > 0");
  }
}

QualityEstimate assess_quality(std::size_t d, double s, const QualityParams& qp) {
  if (d == 0) throw PreconditionError("data quality needs a positive sample count");
  if (!(s >= 0.0)) throw PreconditionError("label-distribution distance must be >= 0");
  const double base = static_cast<double>(d) - qp.gamma3 * s;
  if (base <= 0.0) {
    spdlog::debug("quality base d - g3*s = {} <= 0 (d={}, s={}); using floor {}", base, d, s, kThetaFloor);
    return {kThetaFloor, true};
  }
  const double raw = 1.0 - qp.gamma1 * std::exp(-qp.gamma2 * std::pow(base, qp.gamma4));
  if (raw < kThetaFloor || raw > 1.0 || !std::isfinite(raw)) {
    spdlog::debug("quality {} outside [{}, 1] (d={}, s={}); clamping", raw, kThetaFloor, d, s);
    return {std::clamp(std::isfinite(raw) ? raw : kThetaFloor, kThetaFloor, 1.0), true};
  }
  return {raw, false};
}

double data_quality(std::size_t d, double s, const QualityParams& qp) { return assess_quality(d, s, qp).theta; }

MarketModel MarketModel::uniform(std::size_t levels) {
  if (levels < 1) throw ConfigError("a market needs at least one level");
  MarketModel m;
  for (std::size_t n = 1; n <= levels; ++n) {
    m.theta.push_back(static_cast<double>(n) / static_cast<double>(levels));
    m.p.push_back(1.0 / static_cast<double>(levels));
  }
  return m;
}

void MarketModel::validate() const {
  if (theta.empty()) throw ConfigError("market has no levels");
  if (theta.size() != p.size()) throw ConfigError("market theta and p have different lengths");
  for (std::size_t n = 0; n < theta.size(); ++n) {
    if (!(theta[n] > 0.0 && theta[n] <= 1.0)) throw ConfigError("market theta values must lie in (0, 1]");
    if (n > 0 && !(theta[n] > theta[n - 1])) throw ConfigError("market theta must be strictly increasing");
    if (!(p[n] >= 0.0)) throw ConfigError("market probabilities must be >= 0");
  }
  if (std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) > 1e-9) {
    throw ConfigError("market probabilities must sum to 1");
  }
  if (!(xi > 0.0 && c > 0.0 && f > 0.0)) throw ConfigError("xi, c and f must be > 0");
  if (!(E_com >= 0.0 && T_com >= 0.0)) throw ConfigError("communication time and energy must be >= 0");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (!(T_max > T_com)) throw ConfigError("T_max must exceed T_com");
}

int level_of(double theta, const MarketModel& market) {
  if (!(theta > 0.0 && theta <= 1.0)) throw PreconditionError("theta must lie in (0, 1]");
  constexpr double kBoundaryTol = 1e-12;
  for (std::size_t n = 0; n < market.levels(); ++n) {
    if (theta <= market.theta[n] + kBoundaryTol) return static_cast<int>(n + 1);
  }
  spdlog::warn("theta {} above top level boundary {}; clamping to level {}", theta, market.theta.back(),
               market.levels());
  return static_cast<int>(market.levels());
}

double accuracy_curve(double effort, double theta, const AccuracyCurveParams& acp) {
  if (!(effort > 0.0)) throw PreconditionError("accuracy curve needs effort > 0");
  return acp.beta1 + acp.beta2 * theta - acp.beta3 * std::exp(-acp.beta4 * std::pow(1e-3 * effort, acp.beta5));
}

std::vector<double> l_coeffs(const MarketModel& market) {
  market.validate();
  const std::size_t levels = market.levels();
  const double k = market.unit_cost();
  std::vector<double> l(levels);
  // tail[n] = sum_{i > n} theta_i p_i (0-based)
  double tail = 0.0;
  for (std::size_t n = levels; n-- > 0;) {
    l[n] = k * market.p[n];
    if (n + 1 < levels) l[n] += k * (1.0 / market.theta[n] - 1.0 / market.theta[n + 1]) * tail;
    tail += market.theta[n] * market.p[n];
  }
  return l;
}

std::vector<double> rewards_from_efforts(std::span<const double> efforts, const MarketModel& market) {
  market.validate();
  if (efforts.size() != market.levels()) throw ContractError("one effort per level is required");
  const double k = market.unit_cost();
  std::vector<double> rewards(efforts.size());
  for (std::size_t n = 0; n < efforts.size(); ++n) {
    if (!(efforts[n] > 0.0)) throw ContractError("efforts must be > 0");
    if (n == 0) {
      rewards[0] = (k * efforts[0] + market.E_com) / market.theta[0];
    } else {
      if (efforts[n] < efforts[n - 1]) {
        throw ContractError("efforts must be nondecreasing in the level (level " + std::to_string(n + 1) + ")");
      }
      rewards[n] = rewards[n - 1] + k * (efforts[n] - efforts[n - 1]) / market.theta[n];
    }
  }
  return rewards;
}

double per_level_objective(double effort, int level, std::span<const double> l, const MarketModel& market,
                           const AccuracyCurveParams& acp) {
  check_level(level, market);
  const auto n = static_cast<std::size_t>(level - 1);
  if (l.size() != market.levels()) throw PreconditionError("l coefficients do not match the market");
  const double slack = market.T_max - market.T_com - effort * market.c / market.f;
  if (!(slack > 0.0)) {
    throw DomainError("effort " + std::to_string(effort) + " violates the time bound T_com + e c / f < T_max");
  }
  return market.p[n] * (market.lambda1 * accuracy_curve(effort, market.theta[n], acp) +
                        market.lambda2 * std::log(slack)) -
         l[n] * effort;
}

double max_feasible_effort(const MarketModel& market, const SolverOptions& options) {
  const double delta = options.delta_fraction * market.T_max;
  return (market.T_max - market.T_com - delta) * market.f / market.c;
}

LevelOptimum solve_level(int level, std::span<const double> l, const MarketModel& market,
                         const AccuracyCurveParams& acp, const SolverOptions& options) {
  check_level(level, market);
  if (options.grid_points < 2) throw ConfigError("solver grid needs at least two points");
  const double lo = options.e_min;
  const double hi = max_feasible_effort(market, options);
  if (!(hi > lo)) throw ConfigError("no feasible effort range: e_max <= e_min");
  auto objective = [&](double e) { return per_level_objective(e, level, l, market, acp); };

  const double step = (hi - lo) / static_cast<double>(options.grid_points - 1);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.grid_points; ++i) {
    const double e = (i + 1 == options.grid_points) ? hi : lo + step * static_cast<double>(i);
    const double v = objective(e);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  auto grid_at = [&](std::size_t i) { return (i + 1 == options.grid_points) ? hi : lo + step * static_cast<double>(i); };
  LevelOptimum out;
  out.grid_effort = grid_at(best);
  out.grid_objective = best_value;

  double a = grid_at(best == 0 ? 0 : best - 1);
  double b = grid_at(std::min(best + 1, options.grid_points - 1));
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);
  for (std::size_t it = 0; it < options.golden_iterations && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = objective(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = objective(x1);
    }
  }
  const double refined = f1 >= f2 ? x1 : x2;
  const double refined_value = std::max(f1, f2);
  if (refined_value >= best_value) {
    out.effort = refined;
    out.objective = refined_value;
  } else {
    out.effort = out.grid_effort;
    out.objective = best_value;
  }
  return out;
}

ContractMenu solve_contract(const MarketModel& market, const AccuracyCurveParams& acp, const SolverOptions& options) {
  market.validate();
  acp.validate();
  const auto l = l_coeffs(market);
  const std::size_t levels = market.levels();
  std::vector<LevelOptimum> optima;
  optima.reserve(levels);
  for (std::size_t n = 1; n <= levels; ++n) optima.push_back(solve_level(static_cast<int>(n), l, market, acp, options));

  std::vector<double> efforts(levels);
  for (std::size_t n = 0; n < levels; ++n) {
    efforts[n] = optima[n].effort;
    if (n > 0 && efforts[n] < efforts[n - 1]) {
      // Sub-tolerance dips come from the 1-D refinement, not from the problem.
      if (efforts[n - 1] - efforts[n] <= 1e-9 * std::max(1.0, efforts[n - 1])) {
        efforts[n] = efforts[n - 1];
        continue;
      }
      throw SolverError("optimal efforts are not monotone: e_" + std::to_string(n + 1) + " = " +
                        std::to_string(efforts[n]) + " < e_" + std::to_string(n) + " = " +
                        std::to_string(efforts[n - 1]) +
                        "; higher levels must be asked for at least as much effort");
    }
  }
  const auto rewards = rewards_from_efforts(efforts, market);

  ContractMenu menu;
  double total = 0.0;
  double theta_p = 0.0;
  for (std::size_t n = 0; n < levels; ++n) {
    ContractEntry e;
    e.level = static_cast<int>(n + 1);
    e.theta = market.theta[n];
    e.p = market.p[n];
    e.effort = efforts[n];
    e.reward = rewards[n];
    e.objective = per_level_objective(efforts[n], e.level, l, market, acp);
    total += e.objective;
    theta_p += market.theta[n] * market.p[n];
    menu.entries.push_back(e);
  }
  menu.diagnostics.constant_payment = market.E_com / market.theta[0] * theta_p;
  menu.diagnostics.publisher_utility = total - menu.diagnostics.constant_payment;
  menu.diagnostics.grid_points = options.grid_points;
  menu.diagnostics.e_min = options.e_min;
  menu.diagnostics.e_max = max_feasible_effort(market, options);
  menu.diagnostics.grid_step =
      (menu.diagnostics.e_max - options.e_min) / static_cast<double>(options.grid_points - 1);
  return menu;
}

double utility_of_choice(const ContractMenu& menu, const MarketModel& market, int type, int choice) {
  check_level(type, market);
  check_level(choice, market);
  const auto& offered = menu.at_level(choice);
  return market.theta[static_cast<std::size_t>(type - 1)] * offered.reward - market.unit_cost() * offered.effort -
         market.E_com;
}

ContractReport verify_contract(const ContractMenu& menu, const MarketModel& market, double tolerance) {
  market.validate();
  ContractReport report;
  const std::size_t levels = market.levels();
  if (menu.levels() != levels) {
    report.failures.push_back("menu has " + std::to_string(menu.levels()) + " entries for " +
                              std::to_string(levels) + " levels");
    return report;
  }
  report.ic_margin.assign(levels, std::vector<double>(levels, 0.0));
  for (std::size_t n = 0; n < levels; ++n) {
    const int type = static_cast<int>(n + 1);
    const double ir = utility_of_choice(menu, market, type, type);
    report.ir.push_back(ir);
    if (ir < -tolerance) report.failures.push_back("IR_" + std::to_string(type) + " = " + std::to_string(ir));
    if (std::abs(ir) <= tolerance) report.binding_ir.push_back(type);
    for (std::size_t m = 0; m < levels; ++m) {
      const int choice = static_cast<int>(m + 1);
      const double margin = ir - utility_of_choice(menu, market, type, choice);
      report.ic_margin[n][m] = margin;
      if (m != n && margin < -tolerance) {
        report.failures.push_back("IC(" + std::to_string(type) + "->" + std::to_string(choice) +
                                  ") margin = " + std::to_string(margin));
      }
    }
    if (n > 0) {
      if (std::abs(report.ic_margin[n][n - 1]) <= tolerance) report.binding_ic_down.push_back(type);
      const auto& prev = menu.entries[n - 1];
      const auto& cur = menu.entries[n];
      if (cur.effort < prev.effort || cur.reward < prev.reward) {
        report.failures.push_back("menu not monotone at level " + std::to_string(type));
      }
    }
  }
  return report;
}

EpochAssignment local_epochs(double effort, std::size_t d) {
  if (!(effort > 0.0)) throw PreconditionError("local epochs need effort > 0");
  if (d == 0) throw PreconditionError("local epochs need d > 0");
  const double raw = std::floor(effort / static_cast<double>(d));
  if (raw < 1.0) return {1, true};
  return {static_cast<int>(std::min(raw, static_cast<double>(std::numeric_limits<int>::max()))), false};
}

double client_utility(int level, const ContractMenu& menu, const MarketModel& market, int tau, std::size_t d) {
  check_level(level, market);
  const auto& entry = menu.at_level(level);
  const double effort = static_cast<double>(tau) * static_cast<double>(d);
  return market.theta[static_cast<std::size_t>(level - 1)] * entry.reward - market.unit_cost() * effort -
         market.E_com;
}

nlohmann::json menu_to_json(const ContractMenu& menu, const MarketModel& market, const ContractReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t n = 0; n < menu.entries.size(); ++n) {
    const auto& e = menu.entries[n];
    const bool ir = std::find(report.binding_ir.begin(), report.binding_ir.end(), e.level) != report.binding_ir.end();
    const bool ic = std::find(report.binding_ic_down.begin(), report.binding_ic_down.end(), e.level) !=
                    report.binding_ic_down.end();
    levels.push_back({{"n", e.level},
                      {"theta", e.theta},
                      {"p", e.p},
                      {"effort", e.effort},
                      {"reward", e.reward},
                      {"objective_share", e.objective},
                      {"binding", {{"ir", ir}, {"ic_down", ic}}}});
  }
  return {{"levels", levels},
          {"verified", report.ok()},
          {"failures", report.failures},
          {"diagnostics",
           {{"publisher_utility", menu.diagnostics.publisher_utility},
            {"constant_payment", menu.diagnostics.constant_payment},
            {"grid_points", menu.diagnostics.grid_points},
            {"grid_step", menu.diagnostics.grid_step},
            {"e_min", menu.diagnostics.e_min},
            {"e_max", menu.diagnostics.e_max}}},
          {"market",
           {{"xi", market.xi},
            {"c", market.c},
            {"f", market.f},
            {"T_com", market.T_com},
            {"E_com", market.E_com},
            {"lambda1", market.lambda1},
            {"lambda2", market.lambda2},
            {"T_max", market.T_max}}}};
}

ContractMenu menu_from_json(const nlohmann::json& doc) {
  ContractMenu menu;
  try {
    for (const auto& lv : doc.at("levels")) {
      ContractEntry e;
      e.level = lv.at("n").get<int>();
      e.theta = lv.at("theta").get<double>();
      e.p = lv.at("p").get<double>();
      e.effort = lv.at("effort").get<double>();
      e.reward = lv.at("reward").get<double>();
      e.objective = lv.value("objective_share", 0.0);
      if (e.level != static_cast<int>(menu.entries.size()) + 1) throw ConfigError("contract levels must be 1..N in order");
      menu.entries.push_back(e);
    }
    if (doc.contains("diagnostics")) {
      const auto& d = doc.at("diagnostics");
      menu.diagnostics.publisher_utility = d.value("publisher_utility", 0.0);
      menu.diagnostics.constant_payment = d.value("constant_payment", 0.0);
      menu.diagnostics.grid_points = d.value("grid_points", std::size_t{0});
      menu.diagnostics.grid_step = d.value("grid_step", 0.0);
      menu.diagnostics.e_min = d.value("e_min", 0.0);
      menu.diagnostics.e_max = d.value("e_max", 0.0);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed contract menu: ") + ex.what());
  }
  return menu;
}

}  // namespace cfl
