#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfl {

/// Coefficients of theta = 1 - g1 * exp(-g2 * (d - g3 * s)^g4).
struct QualityParams {
  double gamma1 = 10.559;
  double gamma2 = 1.803;
  double gamma3 = 70.0;
  double gamma4 = 0.155;

  void validate() const;
};

/// Coefficients of q(e, theta) = b1 + b2 * theta - b3 * exp(-b4 * (e / 1000)^b5).
struct AccuracyCurveParams {
  double beta1 = 0.459;
  double beta2 = 0.432;
  double beta3 = 0.459;
  double beta4 = 0.009;
  double beta5 = 2.436;

  void validate() const;
};

/// Lower clamp for data quality; levels need theta in (0, 1].
inline constexpr double kThetaFloor = 0.01;

struct QualityEstimate {
  double theta = kThetaFloor;
  /// True when the raw expression fell outside [kThetaFloor, 1] or was undefined.
  bool clamped = false;
};

/// Data quality from quantity `d` and label-distribution distance `s`.
QualityEstimate assess_quality(std::size_t d, double s, const QualityParams& qp);

/// assess_quality(...).theta
double data_quality(std::size_t d, double s, const QualityParams& qp);

/// Level structure and cost constants the publisher designs contracts for.
///
/// Per-level constants are standardized across levels: every level shares
/// the same cycles-per-sample c, CPU frequency f, capacitance xi, and
/// communication time/energy.
struct MarketModel {
  std::vector<double> theta;  ///< strictly increasing, each in (0, 1]
  std::vector<double> p;      ///< level probabilities, sum to 1
  double xi = 2.0;
  double c = 5.0;
  double f = 1.0;
  double T_com = 10.0;
  double E_com = 20.0;
  double lambda1 = 5e6;
  double lambda2 = 4e5;
  double T_max = 1e5;

  /// theta_n = n / levels, p_n = 1 / levels, remaining fields at their defaults.
  static MarketModel uniform(std::size_t levels);

  std::size_t levels() const noexcept { return theta.size(); }
  /// xi * c * f^2, the energy of processing one unit of effort.
  double unit_cost() const noexcept { return xi * c * f * f; }
  void validate() const;
};

/// 1-based level whose interval (theta_{n-1}, theta_n] holds `theta`.
/// Values above theta_N are clamped to N with a warning.
int level_of(double theta, const MarketModel& market);

/// Fitted test-accuracy curve q(e, theta).
double accuracy_curve(double effort, double theta, const AccuracyCurveParams& acp);

/// Effective per-unit-effort payment coefficients l_1..l_N obtained by
/// substituting the binding-constraint rewards into sum_n theta_n p_n R_n.
std::vector<double> l_coeffs(const MarketModel& market);

/// Rewards that make IR_1 and every local downward IC constraint bind:
///   R_n = sum_{i=2..n} unit_cost (e_i - e_{i-1}) / theta_i + (unit_cost e_1 + E_com) / theta_1.
/// Throws ContractError if `efforts` is not nondecreasing and positive.
std::vector<double> rewards_from_efforts(std::span<const double> efforts, const MarketModel& market);

/// Level-n share of the publisher objective after reward substitution:
///   p_n [lambda1 q(e, theta_n) + lambda2 ln(T_max - T_com - e c / f)] - l_n e.
/// `level` is 1-based. Throws DomainError when T_com + e c / f >= T_max.
double per_level_objective(double effort, int level, std::span<const double> l, const MarketModel& market,
                           const AccuracyCurveParams& acp);

struct SolverOptions {
  std::size_t grid_points = 2048;
  double e_min = 1.0;
  /// Feasibility margin delta = delta_fraction * T_max kept below the time bound.
  double delta_fraction = 1e-6;
  std::size_t golden_iterations = 200;
};

struct LevelOptimum {
  double effort = 0.0;
  double objective = 0.0;
  double grid_effort = 0.0;
  double grid_objective = 0.0;
};

/// Maximizes per_level_objective over [e_min, e_max]: a uniform grid scan
/// followed by golden-section search on the bracket around the best point.
LevelOptimum solve_level(int level, std::span<const double> l, const MarketModel& market,
                         const AccuracyCurveParams& acp, const SolverOptions& options = {});

/// Largest feasible effort (T_max - T_com - delta) f / c.
double max_feasible_effort(const MarketModel& market, const SolverOptions& options = {});

struct ContractEntry {
  int level = 0;
  double theta = 0.0;
  double p = 0.0;
  double effort = 0.0;
  double reward = 0.0;
  /// Per-level objective contribution at the chosen effort.
  double objective = 0.0;
};

struct ContractDiagnostics {
  double publisher_utility = 0.0;
  /// (E_com / theta_1) * sum_n theta_n p_n, the effort-independent payment.
  double constant_payment = 0.0;
  std::size_t grid_points = 0;
  double grid_step = 0.0;
  double e_min = 0.0;
  double e_max = 0.0;
};

struct ContractMenu {
  std::vector<ContractEntry> entries;
  ContractDiagnostics diagnostics;

  std::size_t levels() const noexcept { return entries.size(); }
  const ContractEntry& at_level(int level) const { return entries.at(static_cast<std::size_t>(level - 1)); }
};

/// Solves the publisher's contract problem level by level, then derives rewards.
/// Throws SolverError when the optimal efforts are not monotone in the level.
ContractMenu solve_contract(const MarketModel& market, const AccuracyCurveParams& acp,
                            const SolverOptions& options = {});

/// Utility of a level-`type` client that signs the level-`choice` contract.
double utility_of_choice(const ContractMenu& menu, const MarketModel& market, int type, int choice);

struct ContractReport {
  std::vector<double> ir;                     ///< IR_n, must be >= -tolerance
  std::vector<std::vector<double>> ic_margin;  ///< [n][m] = U(n picks n) - U(n picks m)
  std::vector<int> binding_ir;
  std::vector<int> binding_ic_down;  ///< levels n >= 2 whose IC towards n-1 binds
  std::vector<std::string> failures;

  bool ok() const noexcept { return failures.empty(); }
};

/// Checks every IR and pairwise IC constraint plus monotonicity of the menu.
ContractReport verify_contract(const ContractMenu& menu, const MarketModel& market, double tolerance = 1e-9);

struct EpochAssignment {
  int tau = 1;
  /// floor(e / d) was 0 and got raised to 1.
  bool clamped = false;
};

/// floor(effort / d), raised to at least 1.
EpochAssignment local_epochs(double effort, std::size_t d);

/// theta_n R_n - xi (tau d) c f^2 - E_com for a level-n client that trained tau epochs on d samples.
double client_utility(int level, const ContractMenu& menu, const MarketModel& market, int tau, std::size_t d);

nlohmann::json menu_to_json(const ContractMenu& menu, const MarketModel& market, const ContractReport& report);
ContractMenu menu_from_json(const nlohmann::json& doc);

}  // namespace cfl
