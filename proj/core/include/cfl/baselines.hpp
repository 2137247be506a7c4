#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "cfl/dataset.hpp"
#include "cfl/model.hpp"

namespace cfl {

enum class BaselineAlgorithm { kFedAvg, kFedProx, kLocalSgd };

BaselineAlgorithm parse_baseline(std::string_view name);
std::string_view baseline_name(BaselineAlgorithm algorithm);

struct BaselineConfig {
  BaselineAlgorithm algorithm = BaselineAlgorithm::kFedAvg;
  std::size_t local_epochs = 10;
  double prox_mu = 0.01;
  std::size_t rounds = 30;
  double lr = 0.01;
  std::size_t batch_size = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  void validate() const;
};

/// One synchronous round: every client trains `local_epochs` from `global`
/// and the deltas are averaged with weights d_k / D. FedProx adds the
/// proximal pull towards `global` when prox_mu > 0.
Model fedavg_round(const Model& global, std::span<const ClientDataset> clients, const BaselineConfig& cfg,
                   std::size_t round);

/// One SGD step on loss + mu/2 ||w - anchor||^2.
Model fedprox_step(const Model& model, const Model& anchor, const Batch& batch, double lr, double mu);

struct BaselineRound {
  std::size_t round = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::size_t participants = 0;
};

/// Centralized training on `pool`: `local_epochs` epochs per round, evaluated on `test` after each.
std::vector<BaselineRound> local_sgd_run(const Model& initial, const Dataset& pool, const Dataset& test,
                                         const BaselineConfig& cfg);

/// Runs cfg.rounds rounds of the selected algorithm. Local SGD trains on the
/// union of the client shards, labels included as the clients hold them.
std::vector<BaselineRound> run_baseline(const Model& initial, std::span<const ClientDataset> clients,
                                        const Dataset& test, const BaselineConfig& cfg);

/// Union of client shards in ascending client order.
Dataset merge_clients(std::span<const ClientDataset> clients);

/// `round,test_loss,test_accuracy,admitted_count`; every client counts as admitted.
void write_baseline_summary_csv(std::ostream& out, std::span<const BaselineRound> rounds);

}  // namespace cfl
