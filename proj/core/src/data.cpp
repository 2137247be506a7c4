#include "cfl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cfl/error.hpp"
#include "cfl/format.hpp"
#include "cfl/seed.hpp"

namespace cfl {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

std::string hex(std::uint32_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += kDigits[(v >> shift) & 0xF];
  return s;
}

// Largest-remainder apportionment of `total` over nonnegative `weights`.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || sum <= 0.0) return out;
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total && i < order.size(); ++i, ++assigned) ++out[order[i]];
  return out;
}

}  // namespace

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                      std::to_string(labels.size()) + " labels");
  }
  if (num_classes <= 0) throw ConfigError("dataset needs a positive class count");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ConfigError("label " + std::to_string(y) + " out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ConfigError("subset row index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::vector<double> label_histogram(std::span<const int> labels, int num_classes) {
  std::vector<double> hist(static_cast<std::size_t>(num_classes), 0.0);
  if (labels.empty()) return hist;
  for (int y : labels) hist.at(static_cast<std::size_t>(y)) += 1.0;
  for (double& h : hist) h /= static_cast<double>(labels.size());
  return hist;
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  int num_classes) {
  if (image_bytes.size() < 16) throw ParseError("image file header truncated", image_bytes.size());
  if (const auto magic = read_be32(image_bytes, 0); magic != kImageMagic) {
    throw ParseError("bad image magic " + hex(magic) + ", expected 0x00000803", 0);
  }
  if (label_bytes.size() < 8) throw ParseError("label file header truncated", label_bytes.size());
  if (const auto magic = read_be32(label_bytes, 0); magic != kLabelMagic) {
    throw ParseError("bad label magic " + hex(magic) + ", expected 0x00000801", 0);
  }
  const std::size_t count = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t label_count = read_be32(label_bytes, 4);
  if (label_count != count) {
    throw ParseError("label file holds " + std::to_string(label_count) + " items, image file " +
                         std::to_string(count),
                     4);
  }
  const std::size_t dim = rows * cols;
  if (image_bytes.size() != 16 + count * dim) {
    throw ParseError("image payload is " + std::to_string(image_bytes.size() - 16) + " bytes, header implies " +
                         std::to_string(count * dim),
                     std::min(image_bytes.size(), 16 + count * dim));
  }
  if (label_bytes.size() != 8 + count) {
    throw ParseError("label payload is " + std::to_string(label_bytes.size() - 8) + " bytes, header implies " +
                         std::to_string(count),
                     std::min(label_bytes.size(), 8 + count));
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(image_bytes[16 + i * dim + j]) / 255.0;
    }
    const int y = label_bytes[8 + i];
    if (y >= num_classes) {
      throw ParseError("label " + std::to_string(y) + " exceeds class count " + std::to_string(num_classes),
                       8 + i);
    }
    ds.labels[i] = y;
  }
  return ds;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw ConfigError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  for (;;) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw ParseError("gzip stream error in " + path.string(), out.size());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes) {
  return parse_idx(read_maybe_gzip(images), read_maybe_gzip(labels), num_classes);
}

Dataset sample_synthetic_blobs(const SyntheticSpec& spec, std::size_t count, std::uint64_t sample_seed) {
  if (spec.classes < 1 || spec.dim < 1) throw ConfigError("synthetic spec needs classes >= 1 and dim >= 1");
  if (!(spec.separation > 0.0) || !(spec.noise > 0.0)) throw ConfigError("synthetic separation and noise must be > 0");
  Rng centre_rng(derive_seed(spec.seed, SeedStream::kSynthetic, {0}));
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix centres(spec.classes, static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index c = 0; c < centres.rows(); ++c) {
    for (Eigen::Index j = 0; j < centres.cols(); ++j) centres(c, j) = spec.separation * unit(centre_rng);
  }
  Rng rng(sample_seed);
  Dataset ds;
  ds.num_classes = spec.classes;
  ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(spec.dim));
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    ds.labels[i] = y;
    for (Eigen::Index j = 0; j < centres.cols(); ++j) {
      const double z = centres(y, j) + spec.noise * unit(rng);
      ds.features(static_cast<Eigen::Index>(i), j) = 1.0 / (1.0 + std::exp(-z));
    }
  }
  return ds;
}

Dataset make_synthetic_blobs(const SyntheticSpec& spec) {
  return sample_synthetic_blobs(spec, spec.count, derive_seed(spec.seed, SeedStream::kSynthetic, {1}));
}

HoldoutSplit split_holdout(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(keep.begin(), keep.end());
  return {ds.subset(keep), ds.subset(hold)};
}

Dataset random_subset(const Dataset& ds, std::size_t count, std::uint64_t seed) {
  if (count >= ds.size()) return ds;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return ds.subset(order);
}

void PartitionSpec::validate(int num_classes) const {
  if (num_clients < 1) throw ConfigError("partition needs at least one client");
  if (!(zipf_exponent > 0.0)) throw ConfigError("zipf_exponent must be > 0");
  if (!(dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha must be > 0");
  if (max_classes_per_client < 1 || max_classes_per_client > num_classes) {
    throw ConfigError("max_classes_per_client must lie in [1, " + std::to_string(num_classes) + "]");
  }
}

std::vector<std::size_t> zipf_quantities(std::size_t pool, std::size_t clients, double exponent) {
  std::vector<double> w(clients);
  for (std::size_t k = 0; k < clients; ++k) w[k] = std::pow(static_cast<double>(k + 1), -exponent);
  return apportion(pool, w);
}

std::vector<ClientDataset> partition(const Dataset& ds, const PartitionSpec& spec) {
  ds.validate();
  spec.validate(ds.num_classes);
  const std::size_t n = ds.size();
  const std::size_t clients = spec.num_clients;
  if (clients > n) {
    throw ConfigError("cannot partition " + std::to_string(n) + " samples over " + std::to_string(clients) +
                      " clients");
  }
  const auto classes = static_cast<std::size_t>(ds.num_classes);
  const auto cap = static_cast<std::size_t>(spec.max_classes_per_client);
  const auto quantities = zipf_quantities(n, clients, spec.zipf_exponent);

  Rng rng(spec.seed);
  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < n; ++i) pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> cursor(classes, 0);

  std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
  std::vector<std::vector<std::size_t>> assigned(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    std::vector<double> mix(classes);
    for (double& x : mix) x = gamma(rng);
    if (std::accumulate(mix.begin(), mix.end(), 0.0) <= 0.0) {
      // Every gamma draw underflowed; fall back to a single random class.
      std::fill(mix.begin(), mix.end(), 0.0);
      mix[std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng)] = 1.0;
    }
    std::vector<std::size_t> ranked(classes);
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return mix[a] > mix[b]; });
    std::vector<double> top(cap);
    for (std::size_t r = 0; r < cap; ++r) top[r] = mix[ranked[r]];
    const auto targets = apportion(quantities[k], top);

    std::size_t carry = 0;
    std::size_t used = 0;
    std::vector<bool> holds(classes, false);
    const auto draw = [&](std::size_t cls, std::size_t want) {
      const std::size_t take = std::min(want, pools[cls].size() - cursor[cls]);
      if (take > 0) {
        if (!holds[cls]) ++used;
        holds[cls] = true;
        auto first = pools[cls].begin() + static_cast<std::ptrdiff_t>(cursor[cls]);
        assigned[k].insert(assigned[k].end(), first, first + static_cast<std::ptrdiff_t>(take));
        cursor[cls] += take;
      }
      return want - take;
    };
    for (std::size_t r = 0; r < classes && used < cap; ++r) {
      const std::size_t want = (r < cap ? targets[r] : 0) + carry;
      if (want > 0) carry = draw(ranked[r], want);
    }
    // Quota left after the ranked pass goes to classes the client already holds, or to new ones while under the cap.
    for (std::size_t r = 0; r < classes && carry > 0; ++r) {
      if (holds[ranked[r]] || used < cap) carry = draw(ranked[r], carry);
    }
  }

  for (std::size_t k = 1; k < clients; ++k) {
    if (assigned[k].size() > assigned[k - 1].size()) assigned[k].resize(assigned[k - 1].size());
  }

  std::vector<ClientDataset> out;
  out.reserve(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    if (assigned[k].empty()) {
      throw ConfigError("client " + std::to_string(k) + " received no samples; dataset too small for the spec");
    }
    std::sort(assigned[k].begin(), assigned[k].end());
    ClientDataset cd;
    cd.client_id = k;
    cd.indices = std::move(assigned[k]);
    cd.data = ds.subset(cd.indices);
    cd.label_hist = label_histogram(cd.data.labels, ds.num_classes);
    out.push_back(std::move(cd));
  }
  return out;
}

double emd(std::span<const double> label_hist, std::span<const double> benchmark) {
  if (label_hist.size() != benchmark.size()) {
    throw PreconditionError("EMD of histograms with different lengths");
  }
  const double sp = std::accumulate(label_hist.begin(), label_hist.end(), 0.0);
  const double sq = std::accumulate(benchmark.begin(), benchmark.end(), 0.0);
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw PreconditionError("EMD inputs must be probability vectors");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < label_hist.size(); ++j) total += std::abs(label_hist[j] - benchmark[j]);
  return total;
}

std::vector<double> uniform_benchmark(int classes) {
  return std::vector<double>(static_cast<std::size_t>(classes), 1.0 / classes);
}

ClientDataset flip_labels(const ClientDataset& cd, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw PreconditionError("flip fraction must lie in [0, 1]");
  ClientDataset out = cd;
  const int classes = cd.data.num_classes;
  const std::size_t d = cd.data.size();
  const auto flips = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d)));
  if (flips == 0 || classes < 2) return out;
  Rng rng(seed);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < flips; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, d - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::uniform_int_distribution<int> other(0, classes - 2);
  for (std::size_t i = 0; i < flips; ++i) {
    int& y = out.data.labels[order[i]];
    const int r = other(rng);
    y = r < y ? r : r + 1;
  }
  out.label_hist = label_histogram(out.data.labels, classes);
  return out;
}

void write_partition_csv(std::ostream& out, std::span<const PartitionSummaryRow> rows) {
  out << "client_id,d_k,emd,theta,level\n";
  for (const auto& r : rows) {
    out << r.client_id << ',' << r.d << ',' << format_number(r.emd) << ',' << format_number(r.theta) << ','
        << r.level << '\n';
  }
}

}  // namespace cfl
