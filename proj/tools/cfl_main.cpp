#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cfl/curve_fit.hpp"
#include "cfl/error.hpp"
#include "cfl/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerification = 2;

struct CommonOptions {
  std::string preset = "desk";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> attackers;
  std::optional<double> flip_fraction;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> workers;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--preset", o.preset, "Base preset: paper-noattack, paper-attack30 or desk")->capture_default_str();
  app->add_option("--config", o.config, "JSON config file layered over the preset");
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--attackers", o.attackers, "Number of label-flipping clients");
  app->add_option("--flip-fraction", o.flip_fraction, "Fraction of each attacker's labels to flip");
  app->add_option("--rounds", o.rounds, "Aggregation rounds");
  app->add_option("--workers", o.workers, "Training threads (0 = automatic); never changes results");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--set", o.sets, "Override a config field, e.g. --set access.phi=2.5")->allow_extra_args(false);
}

cfl::ExperimentConfig resolve(const CommonOptions& o) {
  cfl::ExperimentConfig cfg = cfl::preset_config(o.preset);
  if (!o.config.empty()) cfg = cfl::load_config_file(cfg, o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.attackers) cfg.attackers = *o.attackers;
  if (o.flip_fraction) cfg.flip_fraction = *o.flip_fraction;
  if (o.rounds) cfg.rounds = *o.rounds;
  for (const auto& s : o.sets) cfg = cfl::apply_override(cfg, s);
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

std::filesystem::path out_dir(const CommonOptions& o, const std::string& fallback) {
  return o.out.empty() ? std::filesystem::path("runs") / fallback : std::filesystem::path(o.out);
}

void print_menu(const cfl::ContractBundle& b) {
  std::cout << std::setw(5) << "level" << std::setw(8) << "theta" << std::setw(16) << "effort" << std::setw(18)
            << "reward" << std::setw(14) << "IR" << '\n';
  for (std::size_t n = 0; n < b.menu.entries.size(); ++n) {
    const auto& e = b.menu.entries[n];
    std::cout << std::setw(5) << e.level << std::setw(8) << std::setprecision(4) << e.theta << std::setw(16)
              << std::setprecision(10) << e.effort << std::setw(18) << e.reward << std::setw(14)
              << std::setprecision(4) << b.report.ir[n] << '\n';
  }
  std::cout << std::setprecision(10) << "publisher utility: " << b.menu.diagnostics.publisher_utility
            << "  grid: " << b.menu.diagnostics.grid_points << " points, step " << b.menu.diagnostics.grid_step
            << '\n';
  if (b.report.ok()) {
    std::cout << "verified: all IR and IC constraints hold\n";
  } else {
    for (const auto& f : b.report.failures) std::cout << "violated: " << f << '\n';
  }
}

int cmd_contract(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto bundle = cfl::solve_contracts(cfg);
  const auto dir = out_dir(o, "contract");
  std::filesystem::create_directories(dir);
  auto doc = cfl::menu_to_json(bundle.menu, bundle.market, bundle.report);
  doc["effort_scale"] = cfg.effort_scale;
  std::ofstream(dir / "contracts.json", std::ios::binary) << doc.dump(2) << '\n';
  std::ofstream(dir / "config-echo.json", std::ios::binary) << cfl::config_to_json(cfg).dump(2) << '\n';
  print_menu(bundle);
  return bundle.report.ok() ? kExitOk : kExitVerification;
}

int cmd_simulate(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto bundle = cfl::solve_contracts(cfg);
  if (!bundle.report.ok()) {
    print_menu(bundle);
    return kExitVerification;
  }
  const auto data = cfl::prepare_data(cfg, bundle.market);
  const auto dir = out_dir(o, "simulate");
  cfl::write_common_artifacts(dir, cfg, data, bundle);
  const auto outcome = cfl::run_simulation(cfg, data, bundle);
  cfl::write_simulation_artifacts(dir, outcome);
  std::size_t withheld = 0;
  for (const auto& c : outcome.settlement.clients) withheld += c.withheld > 0.0 ? 1 : 0;
  std::cout << "rounds: " << outcome.ledgers.size() << "  final test accuracy: " << std::setprecision(6)
            << outcome.settlement.final_test_accuracy << "  clients with withheld rewards: " << withheld << '\n'
            << "artifacts: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_baseline(const CommonOptions& o, const std::string& algorithm, std::optional<double> mu,
                 std::optional<std::size_t> local_epochs) {
  auto cfg = resolve(o);
  if (mu) cfg.prox_mu = *mu;
  if (local_epochs) cfg.baseline_local_epochs = *local_epochs;
  cfg.validate();
  const auto algo = cfl::parse_baseline(algorithm);
  const auto bundle = cfl::solve_contracts(cfg);
  const auto data = cfl::prepare_data(cfg, bundle.market);
  const auto dir = out_dir(o, std::string(cfl::baseline_name(algo)));
  cfl::write_common_artifacts(dir, cfg, data, bundle);
  const auto rounds = cfl::run_baseline_experiment(cfg, data, algo);
  cfl::write_baseline_artifacts(dir, rounds);
  std::cout << cfl::baseline_name(algo) << " rounds: " << rounds.size() << "  final test accuracy: "
            << std::setprecision(6) << rounds.back().test_accuracy << '\n'
            << "artifacts: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_fit(const std::string& samples_path, const std::string& model_name, std::uint64_t seed,
            const std::string& out) {
  const auto model = cfl::parse_curve_model(model_name);
  std::ifstream in(samples_path, std::ios::binary);
  if (!in) throw cfl::ConfigError("cannot open samples file " + samples_path);
  const auto samples = cfl::read_fit_samples(in, model);
  cfl::FitOptions opt;
  opt.seed = seed;
  const auto fit = cfl::fit_curve(samples, model, cfl::default_params(model), opt);
  nlohmann::json doc{{"model", cfl::curve_model_name(model)},
                     {"params", fit.params},
                     {"rmse", fit.rmse},
                     {"converged", fit.converged},
                     {"iterations", fit.iterations},
                     {"samples", samples.size()}};
  if (model == cfl::CurveModel::kAccuracy) {
    doc["named"] = {{"beta1", fit.params[0]}, {"beta2", fit.params[1]}, {"beta3", fit.params[2]},
                    {"beta4", fit.params[3]}, {"beta5", fit.params[4]}};
  } else {
    doc["named"] = {{"gamma1", fit.params[0]}, {"gamma2", fit.params[1]}, {"gamma4", fit.params[2]}};
  }
  const std::string text = doc.dump(2) + "\n";
  if (!out.empty()) {
    const std::filesystem::path p(out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
  }
  std::cout << text;
  return kExitOk;
}

int cmd_partition_stats(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto market = cfl::effective_market(cfg);
  const auto data = cfl::prepare_data(cfg, market);
  const auto rows = cfl::partition_rows(data.profiles);
  const auto dir = out_dir(o, "partition-stats");
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "partition.csv", std::ios::binary);
    cfl::write_partition_csv(csv, rows);
  }
  std::ofstream(dir / "config-echo.json", std::ios::binary) << cfl::config_to_json(cfg).dump(2) << '\n';
  cfl::write_partition_csv(std::cout, rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contract menus, asynchronous aggregation and baseline runs"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  CommonOptions contract_opts, sim_opts, base_opts, part_opts;
  auto* contract = app.add_subcommand("contract", "Solve and verify the contract menu");
  add_common(contract, contract_opts);
  auto* simulate = app.add_subcommand("simulate", "Run the asynchronous incentive-gated simulation");
  add_common(simulate, sim_opts);

  auto* baseline = app.add_subcommand("baseline", "Run a comparison algorithm");
  add_common(baseline, base_opts);
  std::string algorithm;
  std::optional<double> mu;
  std::optional<std::size_t> local_epochs;
  baseline->add_option("algorithm", algorithm, "fedavg, fedprox or local-sgd")->required();
  baseline->add_option("--mu", mu, "FedProx proximal coefficient");
  baseline->add_option("--local-epochs", local_epochs, "Local epochs per round");

  auto* fit = app.add_subcommand("fit", "Fit the accuracy or quality curve to CSV samples");
  std::string samples, model = "accuracy", fit_out;
  std::uint64_t fit_seed = 1;
  fit->add_option("--samples", samples, "CSV: header, then input columns and the target")->required();
  fit->add_option("--model", model, "accuracy (columns e,theta,q) or quality (columns x,theta)")->capture_default_str();
  fit->add_option("--seed", fit_seed, "Multi-start seed")->capture_default_str();
  fit->add_option("--out", fit_out, "Write the fitted parameters JSON here");

  auto* part = app.add_subcommand("partition-stats", "Partition the data and print per-client quality");
  add_common(part, part_opts);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");

  try {
    if (*contract) return cmd_contract(contract_opts);
    if (*simulate) return cmd_simulate(sim_opts);
    if (*baseline) return cmd_baseline(base_opts, algorithm, mu, local_epochs);
    if (*fit) return cmd_fit(samples, model, fit_seed, fit_out);
    if (*part) return cmd_partition_stats(part_opts);
  } catch (const cfl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
