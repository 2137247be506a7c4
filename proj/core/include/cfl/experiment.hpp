#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfl/asyncsim.hpp"
#include "cfl/baselines.hpp"
#include "cfl/data.hpp"
#include "cfl/incentive.hpp"
#include "cfl/model.hpp"

namespace cfl {

struct DatasetConfig {
  /// "synthetic" or "mnist".
  std::string kind = "synthetic";
  std::string train_images = "data/mnist/train-images-idx3-ubyte";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte";
  /// Random subset of the training file to keep; 0 keeps everything.
  std::size_t train_subset = 0;
  /// Synthetic: samples in the training pool. Its seed comes from the master seed.
  SyntheticSpec synthetic{};
  /// Synthetic: samples in the test set. MNIST: test subset size, 0 keeps everything.
  std::size_t test_count = 1000;
};

/// Every knob of one run. Serializes losslessly to and from JSON.
struct ExperimentConfig {
  std::string preset = "paper-noattack";
  std::uint64_t seed = 1;
  std::size_t rounds = 200;
  DatasetConfig dataset{};
  double holdout_fraction = 0.1;
  /// Partition shape; the seed field is ignored in favour of the master seed.
  PartitionSpec partition{};
  std::size_t levels = 10;
  /// Scalar market constants; theta and p are the uniform grid over `levels`.
  MarketModel market{};
  AccuracyCurveParams accuracy{};
  QualityParams quality{};
  SolverOptions solver{};
  /// Effort unit: efforts are expressed in units of 1/effort_scale of the
  /// native unit, by dividing c and multiplying beta4 by effort_scale^(-beta5).
  double effort_scale = 1.0;
  double delay_lo = 0.5;
  double delay_hi = 2.0;
  double delta_t = 1.0;
  double lr = 0.01;
  std::size_t batch_size = 20;
  std::vector<std::size_t> hidden{64, 32};
  double a = 0.5;
  double epsilon = 2.0;
  double phi = 3.0;
  std::size_t attackers = 0;
  double flip_fraction = 0.5;
  std::size_t baseline_local_epochs = 10;
  double prox_mu = 0.01;
  std::size_t workers = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown preset.
ExperimentConfig preset_config(std::string_view name);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Overlays `doc` on `base`. Unknown keys and ill-typed values raise ConfigError naming the dotted field.
ExperimentConfig apply_json(const ExperimentConfig& base, const nlohmann::json& doc);
/// Applies one `dotted.key=value` override; `value` is read as JSON, falling back to a string.
ExperimentConfig apply_override(const ExperimentConfig& base, std::string_view assignment);
ExperimentConfig load_config_file(const ExperimentConfig& base, const std::filesystem::path& path);

/// Market with the uniform level grid and effort_scale applied to c.
MarketModel effective_market(const ExperimentConfig& cfg);
/// Accuracy curve with effort_scale applied to beta4.
AccuracyCurveParams effective_accuracy(const ExperimentConfig& cfg);

struct ContractBundle {
  MarketModel market;
  AccuracyCurveParams accuracy;
  ContractMenu menu;
  ContractReport report;
};

/// Solves and verifies the menu (optimizer tolerance 1e-6).
ContractBundle solve_contracts(const ExperimentConfig& cfg);

struct ClientProfile {
  std::size_t client_id = 0;
  std::size_t d = 0;
  double emd = 0.0;
  double theta = 0.0;
  bool theta_clamped = false;
  int level = 0;
  bool malicious = false;
};

struct PreparedData {
  Dataset validation;
  Dataset test;
  /// Shards as the clients hold them, attacker label flips applied.
  std::vector<ClientDataset> clients;
  /// Quality profile computed on the clean shards.
  std::vector<ClientProfile> profiles;
};

PreparedData prepare_data(const ExperimentConfig& cfg, const MarketModel& market);

/// Chooses `count` clients round-robin over the populated levels in ascending
/// order, taking the lowest unassigned client id in each level.
std::vector<std::size_t> place_attackers(std::span<const ClientProfile> profiles, std::size_t count);

std::vector<PartitionSummaryRow> partition_rows(std::span<const ClientProfile> profiles);

Model initial_model(const ExperimentConfig& cfg, std::size_t input_dim, int classes);

/// Client states for the simulator: tau from the menu effort, delay from the master seed.
std::vector<ClientState> build_client_states(const ExperimentConfig& cfg, const PreparedData& data,
                                             const ContractMenu& menu);

struct SimulationOutcome {
  std::vector<RoundLedger> ledgers;
  std::vector<ClientState> clients;
  SettlementReport settlement;
};

SimulationOutcome run_simulation(const ExperimentConfig& cfg, const PreparedData& data, const ContractBundle& bundle);

BaselineConfig baseline_config(const ExperimentConfig& cfg, BaselineAlgorithm algorithm);
std::vector<BaselineRound> run_baseline_experiment(const ExperimentConfig& cfg, const PreparedData& data,
                                                   BaselineAlgorithm algorithm);

/// Writes config-echo.json, partition.csv and contracts.json into `dir`.
void write_common_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg, const PreparedData& data,
                            const ContractBundle& bundle);
/// Adds summary.csv, ledger.csv and settlement.json.
void write_simulation_artifacts(const std::filesystem::path& dir, const SimulationOutcome& outcome);
/// Adds summary.csv.
void write_baseline_artifacts(const std::filesystem::path& dir, std::span<const BaselineRound> rounds);

}  // namespace cfl
