#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfl/dataset.hpp"
#include "cfl/incentive.hpp"
#include "cfl/model.hpp"

namespace cfl {

struct TimingParams {
  double c = 5.0;
  double f = 1.0;
  double xi = 2.0;
  /// Analytic communication time and energy, used only for cost accounting.
  double T_com = 10.0;
  double E_com = 20.0;
  /// Simulated seconds per local epoch ~ uniform(delay_lo, delay_hi), drawn once per client.
  double delay_lo = 0.5;
  double delay_hi = 2.0;
  /// Aggregation period.
  double delta_t = 1.0;

  void validate() const;
};

/// Published model version a client trains from.
struct GlobalSnapshot {
  Model model;
  std::size_t round = 0;
  /// Validation loss of `model`, the reference for loss reduction.
  double val_loss = 0.0;
};

struct ClientState {
  std::size_t client_id = 0;
  int level = 1;
  double theta = 1.0;
  const ClientDataset* data = nullptr;
  int tau = 1;
  bool tau_clamped = false;
  /// Round index of the global model the client currently trains from (its timestamp r).
  std::size_t r = 0;
  double start_time = 0.0;
  double busy_until = 0.0;
  double per_epoch_delay = 1.0;
  bool malicious = false;
  double cumulative_energy = 0.0;
  double rewards_earned = 0.0;
  double rewards_withheld = 0.0;
  std::size_t admitted_rounds = 0;
  std::size_t rejected_rounds = 0;
  std::shared_ptr<const GlobalSnapshot> snapshot;
};

/// Per-epoch simulated delay of `client_id`, from the delay stream of `seed`.
double sample_epoch_delay(std::uint64_t seed, std::size_t client_id, const TimingParams& tp);

struct RoundCosts {
  /// Simulated seconds from start to upload: tau * per_epoch_delay.
  double sim_time = 0.0;
  /// tau * c * d / f + T_com.
  double analytic_time = 0.0;
  /// tau * xi * c * d * f^2 + E_com.
  double energy = 0.0;
};

RoundCosts round_costs(const ClientState& client, const TimingParams& tp);

/// global_loss_at_r - client_train_loss.
double loss_reduction(double global_loss_at_r, double client_train_loss);

/// m * theta * (staleness + 1)^(-epsilon).
double access_indicator(double m, double theta, std::size_t staleness, double epsilon);

struct Upload {
  std::size_t client_id = 0;
  int level = 1;
  double q = 0.0;
};

enum class Admission {
  kAdmitted,
  /// Below the level's statistical threshold.
  kFiltered,
  /// Passed the threshold but had q <= 0.
  kNonPositive,
};

struct LevelStats {
  int level = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
  /// |mean - median| > a, so the tighter mean - stddev threshold applies.
  bool skewed = false;
  double threshold = 0.0;
};

struct AccessDecision {
  std::vector<Admission> status;  ///< parallel to the uploads
  std::vector<double> alpha;      ///< parallel to the uploads; 0 unless admitted
  std::vector<LevelStats> levels;  ///< ascending level
  /// No admitted client or nonpositive total q.
  bool noop = false;
};

/// Per-level quality gate followed by q-proportional weights over all admitted uploads.
AccessDecision access_control(std::span<const Upload> uploads, double a, double phi);

struct UploadRecord {
  std::size_t client_id = 0;
  int level = 0;
  std::size_t staleness = 0;
  double m = 0.0;
  double q = 0.0;
  Admission status = Admission::kFiltered;
  double alpha = 0.0;
  int tau = 1;
  bool tau_clamped = false;
  double train_loss = 0.0;
  double energy = 0.0;
};

struct RoundLedger {
  std::size_t round = 0;
  /// End of the aggregation window, (round + 1) * delta_t.
  double sim_time = 0.0;
  std::vector<UploadRecord> uploads;  ///< ascending client_id
  std::vector<LevelStats> level_stats;
  bool noop = true;
  std::size_t admitted_count = 0;
  double val_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

struct AsyncParams {
  double lr = 0.01;
  std::size_t batch_size = 20;
  double a = 0.5;
  double epsilon = 2.0;
  double phi = 3.0;
  std::uint64_t seed = 0;
  /// Worker threads for client training; 0 lets TBB decide.
  std::size_t workers = 0;
};

/// Periodic asynchronous aggregation on a simulated clock.
///
/// Round t covers the window (t dt, (t+1) dt]. Every client whose training
/// finishes inside the window uploads; all of them receive the new global
/// model and restart at (t+1) dt, admitted or not.
class AsyncSimulation {
 public:
  AsyncSimulation(Model initial, std::vector<ClientState> clients, ContractMenu menu, TimingParams timing,
                  AsyncParams params, const Dataset* validation, const Dataset* test);

  RoundLedger run_round();
  std::vector<RoundLedger> run(std::size_t rounds);

  std::size_t round() const noexcept { return round_; }
  const Model& global() const noexcept { return current_->model; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }

 private:
  std::shared_ptr<const GlobalSnapshot> current_;
  std::vector<ClientState> clients_;
  ContractMenu menu_;
  TimingParams timing_;
  AsyncParams params_;
  const Dataset* validation_;
  const Dataset* test_;
  std::size_t round_ = 0;
};

struct ClientSettlement {
  std::size_t client_id = 0;
  int level = 0;
  bool malicious = false;
  std::size_t admitted_rounds = 0;
  std::size_t rejected_rounds = 0;
  double reward = 0.0;
  double withheld = 0.0;
  double energy = 0.0;
  /// reward - energy.
  double realized_utility = 0.0;
};

struct SettlementReport {
  std::vector<ClientSettlement> clients;
  double total_payout = 0.0;
  double total_withheld = 0.0;
  double final_test_accuracy = 0.0;
  /// lambda1 * final_test_accuracy.
  double accuracy_value = 0.0;
  /// accuracy_value - total_payout.
  double publisher_net = 0.0;
};

SettlementReport settle_rewards(std::span<const RoundLedger> ledgers, std::span<const ClientState> clients,
                                const ContractMenu& menu, double lambda1);

/// `round,sim_time,client_id,level,staleness,m,q,admitted,alpha`, one row per upload.
void write_ledger_csv(std::ostream& out, std::span<const RoundLedger> ledgers);
/// `round,test_loss,test_accuracy,admitted_count`, one row per round.
void write_summary_csv(std::ostream& out, std::span<const RoundLedger> ledgers);
nlohmann::json settlement_to_json(const SettlementReport& report);

}  // namespace cfl
