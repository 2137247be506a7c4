#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cfl/asyncsim.hpp"
#include "cfl/error.hpp"
#include "cfl/seed.hpp"
#include "helpers.hpp"

namespace cfl {
namespace {

using testing::as_client;
using testing::random_dataset;

TEST(RoundCosts, Example) {
  ClientDataset cd = as_client(random_dataset(100, 2, 2, 1), 0);
  ClientState c;
  c.data = &cd;
  c.tau = 3;
  c.per_epoch_delay = 2.0;
  const auto costs = round_costs(c, TimingParams{});
  EXPECT_DOUBLE_EQ(costs.sim_time, 6.0);
  EXPECT_DOUBLE_EQ(costs.analytic_time, 3 * 5.0 * 100 + 10.0);
  EXPECT_DOUBLE_EQ(costs.energy, 3 * 2.0 * 5.0 * 100 + 20.0);
}

TEST(EpochDelay, DeterministicAndInRange) {
  TimingParams tp;
  for (std::size_t id = 0; id < 50; ++id) {
    const double d = sample_epoch_delay(9, id, tp);
    EXPECT_GE(d, tp.delay_lo);
    EXPECT_LT(d, tp.delay_hi);
    EXPECT_EQ(d, sample_epoch_delay(9, id, tp));
  }
  EXPECT_NE(sample_epoch_delay(9, 0, tp), sample_epoch_delay(10, 0, tp));
}

TEST(AccessIndicator, Examples) {
  EXPECT_DOUBLE_EQ(loss_reduction(2.3, 1.1), 1.2);
  EXPECT_DOUBLE_EQ(access_indicator(0.4, 0.5, 0, 2.0), 0.2);
  EXPECT_DOUBLE_EQ(access_indicator(0.4, 1.0, 1, 2.0), 0.1);
  EXPECT_DOUBLE_EQ(access_indicator(-0.4, 1.0, 1, 2.0), -0.1);
  EXPECT_THROW(loss_reduction(NAN, 1.0), PreconditionError);
}

TEST(AccessControl, SkewedLevelDropsTheOutlier) {
  const std::vector<Upload> up{{0, 1, 2.0}, {1, 1, 1.9}, {2, 1, 2.1}, {3, 1, -1.0}};
  const auto d = access_control(up, 0.5, 3.0);
  ASSERT_EQ(d.levels.size(), 1u);
  EXPECT_TRUE(d.levels[0].skewed);
  EXPECT_DOUBLE_EQ(d.levels[0].median, 1.95);
  EXPECT_NEAR(d.levels[0].stddev, std::sqrt(6.77 / 4.0), 1e-12);
  EXPECT_EQ(d.status[3], Admission::kFiltered);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(d.status[static_cast<std::size_t>(i)], Admission::kAdmitted);
  EXPECT_NEAR(d.alpha[0], 2.0 / 6.0, 1e-15);
  EXPECT_EQ(d.alpha[3], 0.0);
}

TEST(AccessControl, TightClusterAllAdmitted) {
  const std::vector<Upload> up{{0, 2, 1.0}, {1, 2, 1.1}, {2, 2, 0.9}};
  const auto d = access_control(up, 0.5, 3.0);
  EXPECT_FALSE(d.levels[0].skewed);
  for (auto s : d.status) EXPECT_EQ(s, Admission::kAdmitted);
}

TEST(AccessControl, WeightsAcrossLevels) {
  const std::vector<Upload> up{{0, 1, 2.0}, {1, 2, 3.0}, {2, 3, 5.0}};
  const auto d = access_control(up, 0.5, 3.0);
  EXPECT_DOUBLE_EQ(d.alpha[0], 0.2);
  EXPECT_DOUBLE_EQ(d.alpha[1], 0.3);
  EXPECT_DOUBLE_EQ(d.alpha[2], 0.5);
  EXPECT_EQ(d.levels.size(), 3u);
  // A singleton level has zero spread, so its threshold is q itself.
  EXPECT_EQ(d.levels[1].threshold, 3.0);
}

TEST(AccessControl, NonPositiveSurvivorsAreDroppedAndAllNegativeIsNoop) {
  const std::vector<Upload> up{{0, 1, -0.1}, {1, 1, -0.1}};
  const auto d = access_control(up, 0.5, 3.0);
  EXPECT_TRUE(d.noop);
  EXPECT_EQ(d.status[0], Admission::kNonPositive);
  EXPECT_EQ(d.alpha[0], 0.0);
  EXPECT_THROW(access_control({}, 0.5, 3.0), PreconditionError);
}

// Property: admitted uploads pass their level threshold with q > 0, and alpha is a distribution over them.
TEST(AccessControlProperty, AlphaIsADistributionOverAdmitted) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.5, 0.6);
  std::uniform_int_distribution<int> lvl(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Upload> up(1 + static_cast<std::size_t>(trial % 17));
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = {i, lvl(rng), n(rng)};
    const auto d = access_control(up, 0.5, 3.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) {
      EXPECT_GE(d.alpha[i], 0.0);
      sum += d.alpha[i];
      if (d.status[i] == Admission::kAdmitted) {
        EXPECT_GT(up[i].q, 0.0);
        const auto& st = *std::find_if(d.levels.begin(), d.levels.end(), [&](const LevelStats& s) { return s.level == up[i].level; });
        EXPECT_GE(up[i].q, st.threshold);
      } else {
        EXPECT_EQ(d.alpha[i], 0.0);
      }
    }
    if (d.noop) {
      EXPECT_EQ(sum, 0.0);
    } else {
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

struct Fixture {
  std::vector<ClientDataset> shards;
  Dataset validation;
  Dataset test;
  ContractMenu menu;

  explicit Fixture(std::size_t clients) {
    for (std::size_t i = 0; i < clients; ++i) shards.push_back(as_client(random_dataset(40 + 10 * i, 4, 3, 100 + i), i));
    validation = random_dataset(60, 4, 3, 7);
    test = random_dataset(60, 4, 3, 8);
    menu.entries = {{1, 0.5, 0.5, 100.0, 2040.0, 0.0}, {2, 1.0, 0.5, 200.0, 3040.0, 0.0}};
  }

  std::vector<ClientState> states(std::span<const double> delays) const {
    std::vector<ClientState> out;
    for (std::size_t i = 0; i < shards.size(); ++i) {
      ClientState c;
      c.client_id = i;
      c.level = 1 + static_cast<int>(i % 2);
      c.theta = c.level == 1 ? 0.5 : 1.0;
      c.data = &shards[i];
      c.tau = 1 + static_cast<int>(i % 3);
      c.per_epoch_delay = delays[i];
      out.push_back(c);
    }
    return out;
  }
};

Model small_model() { return Model::glorot_uniform({4, 5, 3}, 3); }

TEST(AsyncSimulation, SingleClientAggregateEqualsItsTrainedModel) {
  Fixture fx(1);
  const double delay[] = {0.7};
  AsyncParams ap;
  ap.seed = 4;
  AsyncSimulation sim(small_model(), fx.states(delay), fx.menu, TimingParams{}, ap, &fx.validation, &fx.test);
  const auto ledger = sim.run_round();
  ASSERT_EQ(ledger.uploads.size(), 1u);
  const auto& rec = ledger.uploads[0];
  if (rec.q > 0.0) {
    EXPECT_EQ(rec.alpha, 1.0);
    TrainOptions opt;
    opt.epochs = 1;
    opt.seed = derive_seed(4, SeedStream::kTraining, {0, 0});
    const auto trained = train_epochs(small_model(), fx.shards[0], opt);
    for (std::size_t k = 0; k < trained.model.params().size(); ++k) {
      EXPECT_NEAR(sim.global().params()[k], trained.model.params()[k], 1e-12);
    }
  }
}

TEST(AsyncSimulation, SlowClientUploadsLateWithStaleness) {
  Fixture fx(2);
  // Client 0 (tau 1) finishes at 2.5, in the window (2, 3]; client 1 (tau 2) at 2 * 0.4 = 0.8.
  const double delays[] = {2.5, 0.4};
  AsyncSimulation sim(small_model(), fx.states(delays), fx.menu, TimingParams{}, AsyncParams{}, &fx.validation,
                      &fx.test);
  const auto ledgers = sim.run(3);
  ASSERT_EQ(ledgers[0].uploads.size(), 1u);
  EXPECT_EQ(ledgers[0].uploads[0].client_id, 1u);
  EXPECT_EQ(ledgers[0].uploads[0].staleness, 0u);
  // Client 1 restarts at 1.0 and finishes at 1.8, in round 1.
  ASSERT_EQ(ledgers[1].uploads.size(), 1u);
  EXPECT_EQ(ledgers[1].uploads[0].staleness, 0u);
  ASSERT_EQ(ledgers[2].uploads.size(), 2u);
  EXPECT_EQ(ledgers[2].uploads[0].client_id, 0u);
  EXPECT_EQ(ledgers[2].uploads[0].staleness, 2u);
  EXPECT_EQ(ledgers[2].uploads[1].staleness, 0u);
}

TEST(AsyncSimulation, RoundWithoutUploadsKeepsTheModel) {
  Fixture fx(1);
  const double delay[] = {3.5};
  AsyncSimulation sim(small_model(), fx.states(delay), fx.menu, TimingParams{}, AsyncParams{}, &fx.validation,
                      &fx.test);
  for (int t = 0; t < 3; ++t) {
    const auto l = sim.run_round();
    EXPECT_TRUE(l.uploads.empty());
    EXPECT_TRUE(l.noop);
    EXPECT_EQ(l.admitted_count, 0u);
    EXPECT_EQ(sim.global(), small_model());
  }
  EXPECT_EQ(sim.run_round().uploads.size(), 1u);
}

std::string ledger_text(std::size_t workers) {
  Fixture fx(6);
  const double delays[] = {0.6, 0.9, 1.3, 0.5, 1.9, 0.7};
  AsyncParams ap;
  ap.seed = 21;
  ap.workers = workers;
  AsyncSimulation sim(small_model(), fx.states(delays), fx.menu, TimingParams{}, ap, &fx.validation, &fx.test);
  const auto ledgers = sim.run(8);
  std::ostringstream out;
  write_ledger_csv(out, ledgers);
  write_summary_csv(out, ledgers);
  return out.str();
}

TEST(AsyncSimulation, IndependentOfWorkerCount) {
  const auto one = ledger_text(1);
  EXPECT_EQ(one, ledger_text(3));
  EXPECT_EQ(one, ledger_text(1));
}

TEST(AsyncSimulation, LedgerInvariants) {
  Fixture fx(6);
  const double delays[] = {0.6, 0.9, 1.3, 0.5, 1.9, 0.7};
  AsyncSimulation sim(small_model(), fx.states(delays), fx.menu, TimingParams{}, AsyncParams{}, &fx.validation,
                      &fx.test);
  const auto ledgers = sim.run(12);
  std::vector<std::size_t> uploads_per_client(6, 0);
  for (const auto& l : ledgers) {
    double sum = 0.0;
    std::size_t admitted = 0;
    for (std::size_t i = 0; i < l.uploads.size(); ++i) {
      const auto& u = l.uploads[i];
      if (i > 0) EXPECT_LT(l.uploads[i - 1].client_id, u.client_id);
      EXPECT_LE(u.staleness, l.round);
      sum += u.alpha;
      if (u.status == Admission::kAdmitted) ++admitted;
      ++uploads_per_client[u.client_id];
    }
    EXPECT_EQ(admitted, l.admitted_count);
    if (!l.noop) EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_GE(l.test_accuracy, 0.0);
    EXPECT_LE(l.test_accuracy, 1.0);
  }
  const auto report = settle_rewards(ledgers, sim.clients(), fx.menu, 5e6);
  for (const auto& s : report.clients) {
    EXPECT_EQ(s.admitted_rounds + s.rejected_rounds, uploads_per_client[s.client_id]);
    const auto& c = sim.clients()[s.client_id];
    EXPECT_DOUBLE_EQ(s.reward, c.rewards_earned);
    EXPECT_DOUBLE_EQ(s.withheld, c.rewards_withheld);
    EXPECT_DOUBLE_EQ(s.energy, c.cumulative_energy);
  }
}

TEST(Settlement, HandExample) {
  ContractMenu menu;
  menu.entries = {{1, 0.5, 0.5, 100.0, 2040.0, 0.0}, {2, 1.0, 0.5, 200.0, 3040.0, 0.0}};
  std::vector<ClientState> clients(2);
  clients[0].client_id = 0;
  clients[0].level = 1;
  clients[1].client_id = 1;
  clients[1].level = 2;
  clients[1].malicious = true;
  RoundLedger r0;
  r0.uploads = {{0, 1, 0, 0.1, 0.1, Admission::kAdmitted, 1.0, 1, false, 1.0, 50.0},
                {1, 2, 0, -0.1, -0.1, Admission::kFiltered, 0.0, 1, false, 1.0, 70.0}};
  RoundLedger r1;
  r1.test_accuracy = 0.8;
  r1.uploads = {{1, 2, 1, 0.3, 0.3, Admission::kAdmitted, 1.0, 1, false, 1.0, 70.0}};
  const std::vector<RoundLedger> ledgers{r0, r1};
  const auto rep = settle_rewards(ledgers, clients, menu, 100.0);
  EXPECT_EQ(rep.clients[0].reward, 2040.0);
  EXPECT_EQ(rep.clients[0].realized_utility, 1990.0);
  EXPECT_EQ(rep.clients[1].reward, 3040.0);
  EXPECT_EQ(rep.clients[1].withheld, 3040.0);
  EXPECT_EQ(rep.clients[1].energy, 140.0);
  EXPECT_EQ(rep.total_payout, 5080.0);
  EXPECT_EQ(rep.total_withheld, 3040.0);
  EXPECT_DOUBLE_EQ(rep.accuracy_value, 80.0);
  EXPECT_DOUBLE_EQ(rep.publisher_net, 80.0 - 5080.0);
  const auto doc = settlement_to_json(rep);
  EXPECT_TRUE(doc["clients"][1]["malicious"].get<bool>());
}

TEST(LedgerCsv, Format) {
  RoundLedger r;
  r.round = 3;
  r.sim_time = 4.0;
  r.uploads = {{7, 2, 1, 0.25, 0.0625, Admission::kAdmitted, 1.0, 1, false, 0.0, 0.0}};
  std::ostringstream out;
  write_ledger_csv(out, std::vector<RoundLedger>{r});
  EXPECT_EQ(out.str(), "round,sim_time,client_id,level,staleness,m,q,admitted,alpha\n3,4,7,2,1,0.25,0.0625,1,1\n");
}

}  // namespace
}  // namespace cfl
