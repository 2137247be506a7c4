#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cfl/dataset.hpp"
#include "cfl/model.hpp"

namespace cfl::testing {

/// Features in [0, 1], labels uniform over `classes`.
inline Dataset random_dataset(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, classes - 1);
  Dataset ds;
  ds.num_classes = classes;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.features(i, j) = u(rng);
    ds.labels.push_back(lab(rng));
  }
  return ds;
}

inline ClientDataset as_client(Dataset ds, std::size_t id) {
  ClientDataset cd;
  cd.client_id = id;
  cd.indices.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) cd.indices[i] = i;
  cd.label_hist = label_histogram(ds.labels, ds.num_classes);
  cd.data = std::move(ds);
  return cd;
}

}  // namespace cfl::testing
