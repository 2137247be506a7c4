#include "cfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "cfl/error.hpp"
#include "cfl/seed.hpp"

namespace cfl {
namespace {

using nlohmann::json;

bool type_compatible(const json& tmpl, const json& value) {
  if (tmpl.is_number_unsigned()) return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  if (tmpl.is_number()) return value.is_number();
  if (tmpl.is_string()) return value.is_string();
  if (tmpl.is_boolean()) return value.is_boolean();
  if (tmpl.is_array()) {
    if (!value.is_array()) return false;
    return std::all_of(value.begin(), value.end(), [](const json& v) {
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    });
  }
  return false;
}

std::string type_name(const json& tmpl) {
  if (tmpl.is_number_unsigned()) return "a nonnegative integer";
  if (tmpl.is_number()) return "a number";
  if (tmpl.is_string()) return "a string";
  if (tmpl.is_boolean()) return "a boolean";
  if (tmpl.is_array()) return "an array of nonnegative integers";
  return "an object";
}

void merge_checked(json& target, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config field '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!target.contains(it.key())) throw ConfigError("unknown config field '" + path + "'");
    json& slot = target[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), path);
    } else {
      if (!type_compatible(slot, it.value())) {
        throw ConfigError("config field '" + path + "' must be " + type_name(slot));
      }
      slot = it.value();
    }
  }
}

ExperimentConfig config_from_tree(const json& j) {
  ExperimentConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.rounds = j.at("rounds").get<std::size_t>();
  const auto& ds = j.at("dataset");
  c.dataset.kind = ds.at("kind").get<std::string>();
  c.dataset.train_images = ds.at("train_images").get<std::string>();
  c.dataset.train_labels = ds.at("train_labels").get<std::string>();
  c.dataset.test_images = ds.at("test_images").get<std::string>();
  c.dataset.test_labels = ds.at("test_labels").get<std::string>();
  c.dataset.train_subset = ds.at("train_subset").get<std::size_t>();
  c.dataset.test_count = ds.at("test_count").get<std::size_t>();
  const auto& syn = ds.at("synthetic");
  c.dataset.synthetic.classes = syn.at("classes").get<int>();
  c.dataset.synthetic.dim = syn.at("dim").get<std::size_t>();
  c.dataset.synthetic.count = syn.at("count").get<std::size_t>();
  c.dataset.synthetic.separation = syn.at("separation").get<double>();
  c.dataset.synthetic.noise = syn.at("noise").get<double>();
  c.holdout_fraction = j.at("holdout_fraction").get<double>();
  const auto& p = j.at("partition");
  c.partition.num_clients = p.at("num_clients").get<std::size_t>();
  c.partition.zipf_exponent = p.at("zipf_exponent").get<double>();
  c.partition.dirichlet_alpha = p.at("dirichlet_alpha").get<double>();
  c.partition.max_classes_per_client = p.at("max_classes_per_client").get<int>();
  const auto& m = j.at("market");
  c.levels = m.at("levels").get<std::size_t>();
  c.market.xi = m.at("xi").get<double>();
  c.market.c = m.at("c").get<double>();
  c.market.f = m.at("f").get<double>();
  c.market.T_com = m.at("T_com").get<double>();
  c.market.E_com = m.at("E_com").get<double>();
  c.market.lambda1 = m.at("lambda1").get<double>();
  c.market.lambda2 = m.at("lambda2").get<double>();
  c.market.T_max = m.at("T_max").get<double>();
  c.effort_scale = m.at("effort_scale").get<double>();
  const auto& acc = j.at("accuracy_curve");
  c.accuracy.beta1 = acc.at("beta1").get<double>();
  c.accuracy.beta2 = acc.at("beta2").get<double>();
  c.accuracy.beta3 = acc.at("beta3").get<double>();
  c.accuracy.beta4 = acc.at("beta4").get<double>();
  c.accuracy.beta5 = acc.at("beta5").get<double>();
  const auto& q = j.at("quality");
  c.quality.gamma1 = q.at("gamma1").get<double>();
  c.quality.gamma2 = q.at("gamma2").get<double>();
  c.quality.gamma3 = q.at("gamma3").get<double>();
  c.quality.gamma4 = q.at("gamma4").get<double>();
  const auto& s = j.at("solver");
  c.solver.grid_points = s.at("grid_points").get<std::size_t>();
  c.solver.e_min = s.at("e_min").get<double>();
  c.solver.delta_fraction = s.at("delta_fraction").get<double>();
  c.solver.golden_iterations = s.at("golden_iterations").get<std::size_t>();
  const auto& t = j.at("timing");
  c.delay_lo = t.at("delay_lo").get<double>();
  c.delay_hi = t.at("delay_hi").get<double>();
  c.delta_t = t.at("delta_t").get<double>();
  const auto& tr = j.at("training");
  c.lr = tr.at("lr").get<double>();
  c.batch_size = tr.at("batch_size").get<std::size_t>();
  c.hidden = tr.at("hidden").get<std::vector<std::size_t>>();
  c.baseline_local_epochs = tr.at("baseline_local_epochs").get<std::size_t>();
  c.prox_mu = tr.at("prox_mu").get<double>();
  const auto& ac = j.at("access");
  c.a = ac.at("a").get<double>();
  c.epsilon = ac.at("epsilon").get<double>();
  c.phi = ac.at("phi").get<double>();
  const auto& at = j.at("attack");
  c.attackers = at.at("attackers").get<std::size_t>();
  c.flip_fraction = at.at("flip_fraction").get<double>();
  return c;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

int dataset_classes(const ExperimentConfig& cfg) {
  return cfg.dataset.kind == "synthetic" ? cfg.dataset.synthetic.classes : 10;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (rounds < 1) throw ConfigError("config field 'rounds' must be >= 1");
  if (dataset.kind != "synthetic" && dataset.kind != "mnist") {
    throw ConfigError("config field 'dataset.kind' must be \"synthetic\" or \"mnist\"");
  }
  if (dataset.kind == "synthetic") {
    if (dataset.synthetic.classes < 2) throw ConfigError("config field 'dataset.synthetic.classes' must be >= 2");
    if (dataset.synthetic.dim < 1) throw ConfigError("config field 'dataset.synthetic.dim' must be >= 1");
    if (dataset.synthetic.count < 1) throw ConfigError("config field 'dataset.synthetic.count' must be >= 1");
    if (dataset.test_count < 1) throw ConfigError("config field 'dataset.test_count' must be >= 1");
    if (!(dataset.synthetic.noise > 0.0 && dataset.synthetic.separation > 0.0)) {
      throw ConfigError("config fields 'dataset.synthetic.noise' and 'dataset.synthetic.separation' must be > 0");
    }
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("config field 'holdout_fraction' must lie in (0, 1)");
  }
  partition.validate(dataset_classes(*this));
  if (levels < 1) throw ConfigError("config field 'market.levels' must be >= 1");
  if (!(effort_scale > 0.0)) throw ConfigError("config field 'market.effort_scale' must be > 0");
  effective_market(*this).validate();
  accuracy.validate();
  quality.validate();
  if (solver.grid_points < 2) throw ConfigError("config field 'solver.grid_points' must be >= 2");
  if (!(solver.e_min > 0.0)) throw ConfigError("config field 'solver.e_min' must be > 0");
  if (!(delay_lo > 0.0 && delay_lo <= delay_hi)) throw ConfigError("config fields 'timing.delay_lo/hi' need 0 < lo <= hi");
  if (!(delta_t > 0.0)) throw ConfigError("config field 'timing.delta_t' must be > 0");
  if (!(lr > 0.0)) throw ConfigError("config field 'training.lr' must be > 0");
  if (batch_size < 1) throw ConfigError("config field 'training.batch_size' must be >= 1");
  if (hidden.empty() || std::find(hidden.begin(), hidden.end(), std::size_t{0}) != hidden.end()) {
    throw ConfigError("config field 'training.hidden' must list positive widths");
  }
  if (baseline_local_epochs < 1) throw ConfigError("config field 'training.baseline_local_epochs' must be >= 1");
  if (!(prox_mu >= 0.0)) throw ConfigError("config field 'training.prox_mu' must be >= 0");
  if (!(a >= 0.0)) throw ConfigError("config field 'access.a' must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("config field 'access.epsilon' must be > 0");
  if (!(phi > 0.0)) throw ConfigError("config field 'access.phi' must be > 0");
  if (attackers > partition.num_clients) throw ConfigError("config field 'attack.attackers' exceeds the client count");
  if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0)) {
    throw ConfigError("config field 'attack.flip_fraction' must lie in [0, 1]");
  }
}

std::vector<std::string> preset_names() { return {"paper-noattack", "paper-attack30", "desk"}; }

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  if (name == "paper-noattack" || name == "paper-attack30") {
    c.dataset.kind = "mnist";
    c.dataset.test_count = 0;
    c.partition.num_clients = 100;
    c.rounds = 200;
    c.attackers = name == "paper-attack30" ? 30 : 0;
    return c;
  }
  if (name == "desk") {
    c.dataset.kind = "synthetic";
    c.dataset.synthetic = SyntheticSpec{};
    c.dataset.synthetic.count = 4000;
    c.dataset.test_count = 1000;
    c.partition.num_clients = 20;
    c.rounds = 30;
    c.effort_scale = 0.05;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper-noattack, paper-attack30 or desk)");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"rounds", c.rounds},
      {"dataset",
       {{"kind", c.dataset.kind},
        {"train_images", c.dataset.train_images},
        {"train_labels", c.dataset.train_labels},
        {"test_images", c.dataset.test_images},
        {"test_labels", c.dataset.test_labels},
        {"train_subset", c.dataset.train_subset},
        {"test_count", c.dataset.test_count},
        {"synthetic",
         {{"classes", static_cast<std::size_t>(std::max(0, c.dataset.synthetic.classes))},
          {"dim", c.dataset.synthetic.dim},
          {"count", c.dataset.synthetic.count},
          {"separation", c.dataset.synthetic.separation},
          {"noise", c.dataset.synthetic.noise}}}}},
      {"holdout_fraction", c.holdout_fraction},
      {"partition",
       {{"num_clients", c.partition.num_clients},
        {"zipf_exponent", c.partition.zipf_exponent},
        {"dirichlet_alpha", c.partition.dirichlet_alpha},
        {"max_classes_per_client", static_cast<std::size_t>(std::max(0, c.partition.max_classes_per_client))}}},
      {"market",
       {{"levels", c.levels},
        {"xi", c.market.xi},
        {"c", c.market.c},
        {"f", c.market.f},
        {"T_com", c.market.T_com},
        {"E_com", c.market.E_com},
        {"lambda1", c.market.lambda1},
        {"lambda2", c.market.lambda2},
        {"T_max", c.market.T_max},
        {"effort_scale", c.effort_scale}}},
      {"accuracy_curve",
       {{"beta1", c.accuracy.beta1},
        {"beta2", c.accuracy.beta2},
        {"beta3", c.accuracy.beta3},
        {"beta4", c.accuracy.beta4},
        {"beta5", c.accuracy.beta5}}},
      {"quality",
       {{"gamma1", c.quality.gamma1},
        {"gamma2", c.quality.gamma2},
        {"gamma3", c.quality.gamma3},
        {"gamma4", c.quality.gamma4}}},
      {"solver",
       {{"grid_points", c.solver.grid_points},
        {"e_min", c.solver.e_min},
        {"delta_fraction", c.solver.delta_fraction},
        {"golden_iterations", c.solver.golden_iterations}}},
      {"timing", {{"delay_lo", c.delay_lo}, {"delay_hi", c.delay_hi}, {"delta_t", c.delta_t}}},
      {"training",
       {{"lr", c.lr},
        {"batch_size", c.batch_size},
        {"hidden", c.hidden},
        {"baseline_local_epochs", c.baseline_local_epochs},
        {"prox_mu", c.prox_mu}}},
      {"access", {{"a", c.a}, {"epsilon", c.epsilon}, {"phi", c.phi}}},
      {"attack", {{"attackers", c.attackers}, {"flip_fraction", c.flip_fraction}}},
  };
}

ExperimentConfig apply_json(const ExperimentConfig& base, const nlohmann::json& doc) {
  json tree = config_to_json(base);
  merge_checked(tree, doc, "");
  ExperimentConfig out = config_from_tree(tree);
  out.workers = base.workers;
  return out;
}

ExperimentConfig apply_override(const ExperimentConfig& base, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json doc = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    doc = json{{*it, doc}};
  }
  return apply_json(base, doc);
}

ExperimentConfig load_config_file(const ExperimentConfig& base, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config file " + path.string() + " is not valid JSON: " + e.what(), e.byte);
  }
  return apply_json(base, doc);
}

MarketModel effective_market(const ExperimentConfig& cfg) {
  MarketModel m = MarketModel::uniform(std::max<std::size_t>(cfg.levels, 1));
  m.xi = cfg.market.xi;
  m.c = cfg.market.c / cfg.effort_scale;
  m.f = cfg.market.f;
  m.T_com = cfg.market.T_com;
  m.E_com = cfg.market.E_com;
  m.lambda1 = cfg.market.lambda1;
  m.lambda2 = cfg.market.lambda2;
  m.T_max = cfg.market.T_max;
  return m;
}

AccuracyCurveParams effective_accuracy(const ExperimentConfig& cfg) {
  AccuracyCurveParams a = cfg.accuracy;
  a.beta4 = cfg.accuracy.beta4 * std::pow(cfg.effort_scale, -cfg.accuracy.beta5);
  return a;
}

ContractBundle solve_contracts(const ExperimentConfig& cfg) {
  ContractBundle b;
  b.market = effective_market(cfg);
  b.accuracy = effective_accuracy(cfg);
  SolverOptions opt = cfg.solver;
  opt.e_min = cfg.solver.e_min * cfg.effort_scale;
  b.menu = solve_contract(b.market, b.accuracy, opt);
  b.report = verify_contract(b.menu, b.market, 1e-6);
  return b;
}

std::vector<std::size_t> place_attackers(std::span<const ClientProfile> profiles, std::size_t count) {
  if (count > profiles.size()) throw ConfigError("more attackers than clients");
  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < profiles.size(); ++i) by_level[profiles[i].level].push_back(i);
  for (auto& [level, members] : by_level) {
    std::sort(members.begin(), members.end(),
              [&](std::size_t x, std::size_t y) { return profiles[x].client_id < profiles[y].client_id; });
  }
  std::vector<std::size_t> chosen;
  std::map<int, std::size_t> next;
  while (chosen.size() < count) {
    for (const auto& [level, members] : by_level) {
      if (chosen.size() == count) break;
      std::size_t& k = next[level];
      if (k < members.size()) chosen.push_back(members[k++]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

PreparedData prepare_data(const ExperimentConfig& cfg, const MarketModel& market) {
  cfg.validate();
  Dataset pool;
  PreparedData out;
  if (cfg.dataset.kind == "synthetic") {
    SyntheticSpec spec = cfg.dataset.synthetic;
    spec.seed = derive_seed(cfg.seed, SeedStream::kSynthetic);
    pool = make_synthetic_blobs(spec);
    out.test = sample_synthetic_blobs(spec, cfg.dataset.test_count, derive_seed(cfg.seed, SeedStream::kSynthetic, {1}));
  } else {
    pool = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
    if (cfg.dataset.train_subset > 0) {
      pool = random_subset(pool, cfg.dataset.train_subset, derive_seed(cfg.seed, SeedStream::kHoldout, {1}));
    }
    out.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    if (cfg.dataset.test_count > 0) {
      out.test = random_subset(out.test, cfg.dataset.test_count, derive_seed(cfg.seed, SeedStream::kHoldout, {2}));
    }
  }
  HoldoutSplit split = split_holdout(pool, cfg.holdout_fraction, derive_seed(cfg.seed, SeedStream::kHoldout));
  out.validation = std::move(split.holdout);

  PartitionSpec ps = cfg.partition;
  ps.seed = derive_seed(cfg.seed, SeedStream::kPartition);
  out.clients = partition(split.train, ps);

  const auto benchmark = uniform_benchmark(split.train.num_classes);
  for (const auto& cd : out.clients) {
    ClientProfile p;
    p.client_id = cd.client_id;
    p.d = cd.d();
    p.emd = emd(cd.label_hist, benchmark);
    const QualityEstimate q = assess_quality(p.d, p.emd, cfg.quality);
    p.theta = q.theta;
    p.theta_clamped = q.clamped;
    p.level = level_of(p.theta, market);
    out.profiles.push_back(p);
  }
  for (std::size_t i : place_attackers(out.profiles, cfg.attackers)) {
    out.profiles[i].malicious = true;
    out.clients[i] = flip_labels(out.clients[i], cfg.flip_fraction,
                                 derive_seed(cfg.seed, SeedStream::kAttacker, {out.clients[i].client_id}));
  }
  return out;
}

std::vector<PartitionSummaryRow> partition_rows(std::span<const ClientProfile> profiles) {
  std::vector<PartitionSummaryRow> rows;
  for (const auto& p : profiles) rows.push_back({p.client_id, p.d, p.emd, p.theta, p.level});
  return rows;
}

Model initial_model(const ExperimentConfig& cfg, std::size_t input_dim, int classes) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(classes));
  return Model::glorot_uniform(dims, derive_seed(cfg.seed, SeedStream::kModelInit));
}

namespace {

TimingParams timing_of(const ExperimentConfig& cfg, const MarketModel& market) {
  TimingParams tp;
  tp.c = market.c;
  tp.f = market.f;
  tp.xi = market.xi;
  tp.T_com = market.T_com;
  tp.E_com = market.E_com;
  tp.delay_lo = cfg.delay_lo;
  tp.delay_hi = cfg.delay_hi;
  tp.delta_t = cfg.delta_t;
  return tp;
}

}  // namespace

std::vector<ClientState> build_client_states(const ExperimentConfig& cfg, const PreparedData& data,
                                             const ContractMenu& menu) {
  const TimingParams tp = timing_of(cfg, effective_market(cfg));
  std::vector<ClientState> states;
  for (std::size_t i = 0; i < data.clients.size(); ++i) {
    const auto& p = data.profiles[i];
    ClientState s;
    s.client_id = p.client_id;
    s.level = p.level;
    s.theta = p.theta;
    s.data = &data.clients[i];
    const EpochAssignment ea = local_epochs(menu.at_level(p.level).effort, p.d);
    s.tau = ea.tau;
    s.tau_clamped = ea.clamped;
    s.per_epoch_delay = sample_epoch_delay(cfg.seed, p.client_id, tp);
    s.malicious = p.malicious;
    states.push_back(s);
  }
  return states;
}

SimulationOutcome run_simulation(const ExperimentConfig& cfg, const PreparedData& data, const ContractBundle& bundle) {
  if (!bundle.report.ok()) throw ContractError("refusing to simulate with an unverified contract menu");
  AsyncParams ap;
  ap.lr = cfg.lr;
  ap.batch_size = cfg.batch_size;
  ap.a = cfg.a;
  ap.epsilon = cfg.epsilon;
  ap.phi = cfg.phi;
  ap.seed = cfg.seed;
  ap.workers = cfg.workers;
  AsyncSimulation sim(initial_model(cfg, data.validation.dim(), data.validation.num_classes),
                      build_client_states(cfg, data, bundle.menu), bundle.menu, timing_of(cfg, bundle.market), ap,
                      &data.validation, &data.test);
  SimulationOutcome out;
  out.ledgers = sim.run(cfg.rounds);
  out.clients = sim.clients();
  out.settlement = settle_rewards(out.ledgers, out.clients, bundle.menu, bundle.market.lambda1);
  return out;
}

BaselineConfig baseline_config(const ExperimentConfig& cfg, BaselineAlgorithm algorithm) {
  BaselineConfig b;
  b.algorithm = algorithm;
  b.local_epochs = cfg.baseline_local_epochs;
  b.prox_mu = cfg.prox_mu;
  b.rounds = cfg.rounds;
  b.lr = cfg.lr;
  b.batch_size = cfg.batch_size;
  b.seed = cfg.seed;
  b.workers = cfg.workers;
  return b;
}

std::vector<BaselineRound> run_baseline_experiment(const ExperimentConfig& cfg, const PreparedData& data,
                                                   BaselineAlgorithm algorithm) {
  const Model init = initial_model(cfg, data.validation.dim(), data.validation.num_classes);
  return run_baseline(init, data.clients, data.test, baseline_config(cfg, algorithm));
}

void write_common_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg, const PreparedData& data,
                            const ContractBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config-echo.json", config_to_json(cfg).dump(2) + "\n");
  std::ofstream part(dir / "partition.csv", std::ios::binary);
  if (!part) throw ConfigError("cannot open " + (dir / "partition.csv").string() + " for writing");
  write_partition_csv(part, partition_rows(data.profiles));
  json contracts = menu_to_json(bundle.menu, bundle.market, bundle.report);
  contracts["effort_scale"] = cfg.effort_scale;
  write_text(dir / "contracts.json", contracts.dump(2) + "\n");
}

void write_simulation_artifacts(const std::filesystem::path& dir, const SimulationOutcome& outcome) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.csv", std::ios::binary);
    write_summary_csv(out, outcome.ledgers);
  }
  {
    std::ofstream out(dir / "ledger.csv", std::ios::binary);
    write_ledger_csv(out, outcome.ledgers);
  }
  write_text(dir / "settlement.json", settlement_to_json(outcome.settlement).dump(2) + "\n");
}

void write_baseline_artifacts(const std::filesystem::path& dir, std::span<const BaselineRound> rounds) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "summary.csv", std::ios::binary);
  write_baseline_summary_csv(out, rounds);
}

}  // namespace cfl
