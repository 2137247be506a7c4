#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cfl {

/// Row-major dense matrix; one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labelled samples with features scaled into [0, 1].
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
  bool empty() const noexcept { return labels.empty(); }

  /// Throws ConfigError if counts disagree or a label is out of range.
  void validate() const;

  /// Copies the listed rows (in the given order) into a new dataset.
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// A client's share of a parent dataset.
///
/// `data` is a materialized copy of the parent rows listed in `indices`, with
/// its own label vector so that label attacks never touch the parent.
struct ClientDataset {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;
  Dataset data;
  std::vector<double> label_hist;

  std::size_t d() const noexcept { return indices.size(); }
};

/// Per-class frequencies of `labels`; all zeros for an empty input.
std::vector<double> label_histogram(std::span<const int> labels, int num_classes);

}  // namespace cfl
