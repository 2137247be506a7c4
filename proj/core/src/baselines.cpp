#include "cfl/baselines.hpp"

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <string>

#include "cfl/error.hpp"
#include "cfl/format.hpp"
#include "cfl/seed.hpp"

namespace cfl {

BaselineAlgorithm parse_baseline(std::string_view name) {
  if (name == "fedavg") return BaselineAlgorithm::kFedAvg;
  if (name == "fedprox") return BaselineAlgorithm::kFedProx;
  if (name == "local-sgd" || name == "local_sgd") return BaselineAlgorithm::kLocalSgd;
  throw ConfigError("unknown baseline '" + std::string(name) + "' (expected fedavg, fedprox or local-sgd)");
}

std::string_view baseline_name(BaselineAlgorithm algorithm) {
  switch (algorithm) {
    case BaselineAlgorithm::kFedAvg:
      return "fedavg";
    case BaselineAlgorithm::kFedProx:
      return "fedprox";
    case BaselineAlgorithm::kLocalSgd:
      return "local-sgd";
  }
  return "fedavg";
}

void BaselineConfig::validate() const {
  if (local_epochs < 1) throw ConfigError("baseline local_epochs must be >= 1");
  if (!(prox_mu >= 0.0)) throw ConfigError("baseline prox_mu must be >= 0");
  if (rounds < 1) throw ConfigError("baseline rounds must be >= 1");
  if (batch_size < 1) throw ConfigError("baseline batch_size must be >= 1");
}

Model fedavg_round(const Model& global, std::span<const ClientDataset> clients, const BaselineConfig& cfg,
                   std::size_t round) {
  if (clients.empty()) throw PreconditionError("a synchronous round needs at least one client");
  const bool prox = cfg.algorithm == BaselineAlgorithm::kFedProx && cfg.prox_mu != 0.0;
  std::vector<std::optional<Model>> locals(clients.size());
  auto train_one = [&](std::size_t k) {
    TrainOptions opt;
    opt.epochs = cfg.local_epochs;
    opt.lr = cfg.lr;
    opt.batch_size = cfg.batch_size;
    opt.seed = derive_seed(cfg.seed, SeedStream::kTraining, {clients[k].client_id, round});
    if (prox) opt.prox = {&global, cfg.prox_mu};
    try {
      locals[k] = train_epochs(global, clients[k], opt).model;
    } catch (const NumericError& e) {
      throw e.in_context("round " + std::to_string(round) + ", client " + std::to_string(clients[k].client_id));
    }
  };
  tbb::task_arena arena(cfg.workers == 0 ? tbb::task_arena::automatic : static_cast<int>(cfg.workers));
  arena.execute([&] { tbb::parallel_for(std::size_t{0}, clients.size(), train_one); });

  double total = 0.0;
  for (const auto& c : clients) total += static_cast<double>(c.d());
  std::vector<ModelDelta> deltas;
  deltas.reserve(clients.size());
  std::vector<WeightedDelta> weighted;
  for (std::size_t k = 0; k < clients.size(); ++k) deltas.push_back(delta_between(*locals[k], global));
  for (std::size_t k = 0; k < clients.size(); ++k) {
    weighted.push_back({deltas[k].values, static_cast<double>(clients[k].d()) / total});
  }
  return aggregate(global, weighted);
}

Model fedprox_step(const Model& model, const Model& anchor, const Batch& batch, double lr, double mu) {
  if (!(mu >= 0.0)) throw PreconditionError("proximal mu must be >= 0");
  return sgd_step(model, batch, lr, mu == 0.0 ? Proximal{} : Proximal{&anchor, mu});
}

Dataset merge_clients(std::span<const ClientDataset> clients) {
  if (clients.empty()) throw PreconditionError("nothing to merge");
  std::size_t rows = 0;
  for (const auto& c : clients) rows += c.data.size();
  Dataset out;
  out.num_classes = clients.front().data.num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows), clients.front().data.features.cols());
  out.labels.reserve(rows);
  Eigen::Index at = 0;
  for (const auto& c : clients) {
    out.features.middleRows(at, c.data.features.rows()) = c.data.features;
    at += c.data.features.rows();
    out.labels.insert(out.labels.end(), c.data.labels.begin(), c.data.labels.end());
  }
  return out;
}

std::vector<BaselineRound> local_sgd_run(const Model& initial, const Dataset& pool, const Dataset& test,
                                         const BaselineConfig& cfg) {
  if (pool.empty()) throw PreconditionError("local SGD needs a nonempty pool");
  cfg.validate();
  std::vector<BaselineRound> out;
  Model global = initial;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    TrainOptions opt;
    opt.epochs = cfg.local_epochs;
    opt.lr = cfg.lr;
    opt.batch_size = cfg.batch_size;
    opt.seed = derive_seed(cfg.seed, SeedStream::kTraining, {0, t});
    global = train_epochs(global, pool, opt).model;
    const Evaluation ev = evaluate(global, test);
    out.push_back({t, ev.loss, ev.accuracy, 1});
  }
  return out;
}

std::vector<BaselineRound> run_baseline(const Model& initial, std::span<const ClientDataset> clients,
                                        const Dataset& test, const BaselineConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm == BaselineAlgorithm::kLocalSgd) return local_sgd_run(initial, merge_clients(clients), test, cfg);
  std::vector<BaselineRound> out;
  Model global = initial;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    global = fedavg_round(global, clients, cfg, t);
    const Evaluation ev = evaluate(global, test);
    out.push_back({t, ev.loss, ev.accuracy, clients.size()});
  }
  return out;
}

void write_baseline_summary_csv(std::ostream& out, std::span<const BaselineRound> rounds) {
  out << "round,test_loss,test_accuracy,admitted_count\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << format_number(r.test_loss) << ',' << format_number(r.test_accuracy) << ','
        << r.participants << '\n';
  }
}

}  // namespace cfl
