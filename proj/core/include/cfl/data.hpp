#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "cfl/dataset.hpp"

namespace cfl {

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

/// Parses an IDX3 image file (magic 0x00000803) and an IDX1 label file
/// (magic 0x00000801), both big-endian. Pixels are scaled by 1/255.
/// Throws ParseError naming the byte offset of the first problem.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  int num_classes = 10);

/// Reads a whole file, transparently inflating gzip content.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes = 10);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Gaussian class blobs squashed into [0, 1] by a logistic map.
///
/// Class centres are drawn once from N(0, separation^2 I); each sample is its
/// class centre plus N(0, noise^2 I), then passed through 1/(1+exp(-z)).
/// Labels cycle through the classes so class counts differ by at most one.
struct SyntheticSpec {
  int classes = 10;
  std::size_t dim = 20;
  std::size_t count = 4000;
  double separation = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

Dataset make_synthetic_blobs(const SyntheticSpec& spec);

/// Draws `count` samples from the same blobs as `spec` (same centres), using
/// `sample_seed` for the per-sample noise. Used for matching test sets.
Dataset sample_synthetic_blobs(const SyntheticSpec& spec, std::size_t count, std::uint64_t sample_seed);

struct HoldoutSplit {
  Dataset train;
  Dataset holdout;
};

/// Moves round(fraction * size) randomly chosen rows into `holdout`.
HoldoutSplit split_holdout(const Dataset& ds, double fraction, std::uint64_t seed);

/// Uniformly chosen subset of `count` rows (all rows when count >= size).
Dataset random_subset(const Dataset& ds, std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Non-IID partitioning
// ---------------------------------------------------------------------------

struct PartitionSpec {
  std::size_t num_clients = 100;
  double zipf_exponent = 1.0;
  double dirichlet_alpha = 0.1;
  int max_classes_per_client = 4;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant fails for a dataset with `num_classes`.
  void validate(int num_classes) const;
};

/// Sample counts proportional to k^(-exponent), k = 1..clients, scaled to
/// `pool` and rounded by the largest-remainder method (sums to `pool`).
std::vector<std::size_t> zipf_quantities(std::size_t pool, std::size_t clients, double exponent);

/// Splits `ds` into disjoint client shards.
///
/// Client k's target size comes from zipf_quantities. Its class mix is a
/// Dirichlet(alpha) draw truncated to the top `max_classes_per_client` classes
/// and renormalized; per-class counts use largest-remainder rounding and are
/// drawn without replacement from shuffled global class pools. When a pool runs
/// dry the shortfall spills to the client's next-ranked class, never exceeding
/// the class cap. Shards are afterwards trimmed so sizes are nonincreasing in k.
std::vector<ClientDataset> partition(const Dataset& ds, const PartitionSpec& spec);

/// Earth mover's distance over an unordered label set with unit ground
/// distance, realized as the L1 distance sum_j |p_j - q_j|.
double emd(std::span<const double> label_hist, std::span<const double> benchmark);

/// Uniform benchmark distribution (1/classes per class).
std::vector<double> uniform_benchmark(int classes);

/// Relabels floor(fraction * d) uniformly chosen samples with a label drawn
/// uniformly from the other num_classes - 1 classes.
ClientDataset flip_labels(const ClientDataset& cd, double fraction, std::uint64_t seed);

struct PartitionSummaryRow {
  std::size_t client_id = 0;
  std::size_t d = 0;
  double emd = 0.0;
  double theta = 0.0;
  int level = 0;
};

/// CSV with header `client_id,d_k,emd,theta,level`.
void write_partition_csv(std::ostream& out, std::span<const PartitionSummaryRow> rows);

}  // namespace cfl
