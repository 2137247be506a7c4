#include "cfl/asyncsim.hpp"

#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "cfl/error.hpp"
#include "cfl/format.hpp"
#include "cfl/seed.hpp"

namespace cfl {

void TimingParams::validate() const {
  if (!(c > 0.0 && f > 0.0 && xi > 0.0)) throw ConfigError("timing c, f and xi must be > 0");
  if (!(T_com >= 0.0 && E_com >= 0.0)) throw ConfigError("timing T_com and E_com must be >= 0");
  if (!(delay_lo > 0.0 && delay_lo <= delay_hi)) throw ConfigError("epoch delay range needs 0 < lo <= hi");
  if (!(delta_t > 0.0)) throw ConfigError("aggregation period must be > 0");
}

double sample_epoch_delay(std::uint64_t seed, std::size_t client_id, const TimingParams& tp) {
  Rng rng(derive_seed(seed, SeedStream::kDelay, {client_id}));
  if (tp.delay_lo == tp.delay_hi) return tp.delay_lo;
  return std::uniform_real_distribution<double>(tp.delay_lo, tp.delay_hi)(rng);
}

RoundCosts round_costs(const ClientState& client, const TimingParams& tp) {
  if (client.tau < 1) throw PreconditionError("round costs need tau >= 1");
  const double tau = client.tau;
  const double d = client.data != nullptr ? static_cast<double>(client.data->d()) : 0.0;
  return {tau * client.per_epoch_delay, tau * tp.c * d / tp.f + tp.T_com, tau * tp.xi * tp.c * d * tp.f * tp.f + tp.E_com};
}

double loss_reduction(double global_loss_at_r, double client_train_loss) {
  if (!std::isfinite(global_loss_at_r) || !std::isfinite(client_train_loss)) {
    throw PreconditionError("loss reduction needs finite losses");
  }
  return global_loss_at_r - client_train_loss;
}

double access_indicator(double m, double theta, std::size_t staleness, double epsilon) {
  return m * theta * std::pow(static_cast<double>(staleness) + 1.0, -epsilon);
}

AccessDecision access_control(std::span<const Upload> uploads, double a, double phi) {
  if (uploads.empty()) throw PreconditionError("access control needs at least one upload");
  AccessDecision out;
  out.status.assign(uploads.size(), Admission::kAdmitted);
  out.alpha.assign(uploads.size(), 0.0);

  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < uploads.size(); ++i) by_level[uploads[i].level].push_back(i);

  for (const auto& [level, members] : by_level) {
    std::vector<double> qs;
    qs.reserve(members.size());
    for (std::size_t i : members) qs.push_back(uploads[i].q);
    LevelStats st;
    st.level = level;
    st.count = qs.size();
    st.mean = std::accumulate(qs.begin(), qs.end(), 0.0) / static_cast<double>(qs.size());
    double var = 0.0;
    for (double q : qs) var += (q - st.mean) * (q - st.mean);
    st.stddev = std::sqrt(var / static_cast<double>(qs.size()));
    std::sort(qs.begin(), qs.end());
    const std::size_t mid = qs.size() / 2;
    st.median = qs.size() % 2 == 1 ? qs[mid] : 0.5 * (qs[mid - 1] + qs[mid]);
    st.skewed = std::abs(st.mean - st.median) > a;
    st.threshold = st.skewed ? st.mean - st.stddev : st.mean - phi * st.stddev;
    for (std::size_t i : members) {
      if (uploads[i].q < st.threshold) {
        out.status[i] = Admission::kFiltered;
      } else if (!(uploads[i].q > 0.0)) {
        out.status[i] = Admission::kNonPositive;
      }
    }
    out.levels.push_back(st);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    if (out.status[i] == Admission::kAdmitted) total += uploads[i].q;
  }
  if (!(total > 0.0)) {
    out.noop = true;
    return out;
  }
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    if (out.status[i] == Admission::kAdmitted) out.alpha[i] = uploads[i].q / total;
  }
  return out;
}

AsyncSimulation::AsyncSimulation(Model initial, std::vector<ClientState> clients, ContractMenu menu,
                                 TimingParams timing, AsyncParams params, const Dataset* validation,
                                 const Dataset* test)
    : clients_(std::move(clients)),
      menu_(std::move(menu)),
      timing_(timing),
      params_(params),
      validation_(validation),
      test_(test) {
  timing_.validate();
  if (validation_ == nullptr || validation_->empty()) throw ConfigError("simulation needs a nonempty validation set");
  if (test_ == nullptr || test_->empty()) throw ConfigError("simulation needs a nonempty test set");
  if (!(params_.epsilon > 0.0)) throw ConfigError("staleness exponent epsilon must be > 0");
  if (params_.batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::sort(clients_.begin(), clients_.end(),
            [](const ClientState& x, const ClientState& y) { return x.client_id < y.client_id; });
  const double val_loss = evaluate(initial, *validation_).loss;
  current_ = std::make_shared<GlobalSnapshot>(GlobalSnapshot{std::move(initial), 0, val_loss});
  for (auto& c : clients_) {
    if (c.data == nullptr || c.data->d() == 0) throw ConfigError("client " + std::to_string(c.client_id) + " has no data");
    if (c.level < 1 || static_cast<std::size_t>(c.level) > menu_.levels()) {
      throw ConfigError("client " + std::to_string(c.client_id) + " has a level outside the menu");
    }
    c.r = 0;
    c.start_time = 0.0;
    c.snapshot = current_;
    c.busy_until = c.start_time + round_costs(c, timing_).sim_time;
  }
}

RoundLedger AsyncSimulation::run_round() {
  const std::size_t t = round_;
  const double window_lo = static_cast<double>(t) * timing_.delta_t;
  const double window_hi = static_cast<double>(t + 1) * timing_.delta_t;
  RoundLedger ledger;
  ledger.round = t;
  ledger.sim_time = window_hi;

  std::vector<std::size_t> uploaders;
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const double done = clients_[i].busy_until;
    if (done > window_lo && done <= window_hi) uploaders.push_back(i);
  }

  std::vector<TrainResult> results;
  if (!uploaders.empty()) {
    std::vector<std::optional<TrainResult>> slots(uploaders.size());
    auto train_one = [&](std::size_t j) {
      const ClientState& c = clients_[uploaders[j]];
      TrainOptions opt;
      opt.epochs = static_cast<std::size_t>(c.tau);
      opt.lr = params_.lr;
      opt.batch_size = params_.batch_size;
      opt.seed = derive_seed(params_.seed, SeedStream::kTraining, {c.client_id, c.r});
      try {
        slots[j] = train_epochs(c.snapshot->model, *c.data, opt);
      } catch (const NumericError& e) {
        throw e.in_context("round " + std::to_string(t) + ", client " + std::to_string(c.client_id));
      }
    };
    const int concurrency = params_.workers == 0 ? tbb::task_arena::automatic : static_cast<int>(params_.workers);
    tbb::task_arena arena(concurrency);
    arena.execute([&] { tbb::parallel_for(std::size_t{0}, uploaders.size(), train_one); });
    results.reserve(slots.size());
    for (auto& s : slots) results.push_back(std::move(*s));
  }

  std::vector<Upload> uploads;
  for (std::size_t j = 0; j < uploaders.size(); ++j) {
    const ClientState& c = clients_[uploaders[j]];
    UploadRecord rec;
    rec.client_id = c.client_id;
    rec.level = c.level;
    rec.staleness = t - c.r;
    rec.train_loss = results[j].epoch_losses.back();
    rec.m = loss_reduction(c.snapshot->val_loss, rec.train_loss);
    rec.q = access_indicator(rec.m, c.theta, rec.staleness, params_.epsilon);
    rec.tau = c.tau;
    rec.tau_clamped = c.tau_clamped;
    rec.energy = round_costs(c, timing_).energy;
    ledger.uploads.push_back(rec);
    uploads.push_back({c.client_id, c.level, rec.q});
  }

  std::shared_ptr<GlobalSnapshot> next;
  if (!uploads.empty()) {
    const AccessDecision decision = access_control(uploads, params_.a, params_.phi);
    ledger.level_stats = decision.levels;
    ledger.noop = decision.noop;
    std::vector<ModelDelta> deltas;
    std::vector<double> weights;
    for (std::size_t j = 0; j < uploads.size(); ++j) {
      auto& rec = ledger.uploads[j];
      rec.status = decision.status[j];
      rec.alpha = decision.alpha[j];
      if (rec.status == Admission::kNonPositive) {
        spdlog::debug("round {}: client {} dropped with q = {}", t, rec.client_id, rec.q);
      }
      if (rec.status == Admission::kAdmitted) {
        deltas.push_back(delta_between(results[j].model, clients_[uploaders[j]].snapshot->model));
        weights.push_back(rec.alpha);
        ++ledger.admitted_count;
      }
    }
    if (decision.noop) {
      spdlog::warn("round {}: no upload admitted, global model unchanged", t);
    } else {
      std::vector<WeightedDelta> wd;
      for (std::size_t k = 0; k < deltas.size(); ++k) wd.push_back({deltas[k].values, weights[k]});
      Model model = aggregate(current_->model, wd);
      const double val_loss = evaluate(model, *validation_).loss;
      next = std::make_shared<GlobalSnapshot>(GlobalSnapshot{std::move(model), t + 1, val_loss});
    }
  }
  if (!next) next = std::make_shared<GlobalSnapshot>(*current_);
  next->round = t + 1;
  ledger.val_loss = next->val_loss;
  const Evaluation ev = evaluate(next->model, *test_);
  ledger.test_loss = ev.loss;
  ledger.test_accuracy = ev.accuracy;

  for (std::size_t j = 0; j < uploaders.size(); ++j) {
    ClientState& c = clients_[uploaders[j]];
    const auto& rec = ledger.uploads[j];
    const double reward = menu_.at_level(c.level).reward;
    c.cumulative_energy += rec.energy;
    if (rec.status == Admission::kAdmitted) {
      c.rewards_earned += reward;
      ++c.admitted_rounds;
    } else {
      c.rewards_withheld += reward;
      ++c.rejected_rounds;
    }
    c.r = t + 1;
    c.snapshot = next;
    c.start_time = window_hi;
    c.busy_until = c.start_time + round_costs(c, timing_).sim_time;
  }
  current_ = next;
  ++round_;
  return ledger;
}

std::vector<RoundLedger> AsyncSimulation::run(std::size_t rounds) {
  std::vector<RoundLedger> out;
  out.reserve(rounds);
  for (std::size_t i = 0; i < rounds; ++i) out.push_back(run_round());
  return out;
}

SettlementReport settle_rewards(std::span<const RoundLedger> ledgers, std::span<const ClientState> clients,
                                const ContractMenu& menu, double lambda1) {
  SettlementReport report;
  std::map<std::size_t, ClientSettlement> by_id;
  for (const auto& c : clients) {
    ClientSettlement s;
    s.client_id = c.client_id;
    s.level = c.level;
    s.malicious = c.malicious;
    by_id[c.client_id] = s;
  }
  for (const auto& ledger : ledgers) {
    for (const auto& rec : ledger.uploads) {
      auto it = by_id.find(rec.client_id);
      if (it == by_id.end()) throw PreconditionError("ledger names unknown client " + std::to_string(rec.client_id));
      auto& s = it->second;
      const double reward = menu.at_level(rec.level).reward;
      s.energy += rec.energy;
      if (rec.status == Admission::kAdmitted) {
        s.reward += reward;
        ++s.admitted_rounds;
      } else {
        s.withheld += reward;
        ++s.rejected_rounds;
      }
    }
  }
  for (auto& [id, s] : by_id) {
    s.realized_utility = s.reward - s.energy;
    report.total_payout += s.reward;
    report.total_withheld += s.withheld;
    report.clients.push_back(s);
  }
  report.final_test_accuracy = ledgers.empty() ? 0.0 : ledgers.back().test_accuracy;
  report.accuracy_value = lambda1 * report.final_test_accuracy;
  report.publisher_net = report.accuracy_value - report.total_payout;
  return report;
}

void write_ledger_csv(std::ostream& out, std::span<const RoundLedger> ledgers) {
  out << "round,sim_time,client_id,level,staleness,m,q,admitted,alpha\n";
  for (const auto& l : ledgers) {
    for (const auto& u : l.uploads) {
      out << l.round << ',' << format_number(l.sim_time) << ',' << u.client_id << ',' << u.level << ','
          << u.staleness << ',' << format_number(u.m) << ',' << format_number(u.q) << ','
          << (u.status == Admission::kAdmitted ? 1 : 0) << ',' << format_number(u.alpha) << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, std::span<const RoundLedger> ledgers) {
  out << "round,test_loss,test_accuracy,admitted_count\n";
  for (const auto& l : ledgers) {
    out << l.round << ',' << format_number(l.test_loss) << ',' << format_number(l.test_accuracy) << ','
        << l.admitted_count << '\n';
  }
}

nlohmann::json settlement_to_json(const SettlementReport& report) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& s : report.clients) {
    clients.push_back({{"client_id", s.client_id},
                       {"level", s.level},
                       {"malicious", s.malicious},
                       {"admitted_rounds", s.admitted_rounds},
                       {"rejected_rounds", s.rejected_rounds},
                       {"reward", s.reward},
                       {"withheld", s.withheld},
                       {"energy", s.energy},
                       {"realized_utility", s.realized_utility}});
  }
  return {{"clients", clients},
          {"publisher",
           {{"total_payout", report.total_payout},
            {"total_withheld", report.total_withheld},
            {"final_test_accuracy", report.final_test_accuracy},
            {"accuracy_value", report.accuracy_value},
            {"net", report.publisher_net}}}};
}

}  // namespace cfl
