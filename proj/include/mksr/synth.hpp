#pragma once

// Planted synthetic datasets for tests and demos.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mksr/kernel.hpp"

namespace mksr {

struct FeatureData {
  MatrixXd x;  ///< dim x N, one sample per column
  std::vector<int> labels;
};

/// Isotropic unit-variance Gaussian classes whose means lie `separation` from
/// the origin (orthogonal when classes <= dim). Samples are grouped by class.
FeatureData gaussian_classes(Index classes, Index per_class, Index dim, double separation, std::uint64_t seed);

/// Points t u_c + noise on random lines u_c through the origin, t ~ N(0, 1).
FeatureData planted_subspaces(Index ambient, Index subspaces, Index per_subspace, double noise, std::uint64_t seed);

/// Squared Euclidean distances between the columns of x (N) and y (M): N x M.
MatrixXd squared_distances(const MatrixXd& x, const MatrixXd& y);

/// Several distance matrices over the same train/test split.
struct KernelDataset {
  std::vector<std::string> ids;
  std::vector<MatrixXd> train;  ///< N x N distances
  std::vector<MatrixXd> cross;  ///< M x N test-to-train distances
  std::vector<int> train_labels;
  std::vector<int> test_labels;
  std::vector<double> informativeness;  ///< class separation used for each kernel, 0 for noise
};

/// One informative Gaussian-class feature set and one label-independent noise
/// set; the noise kernel is listed first.
KernelDataset two_kernel_planted(Index classes, Index train_per_class, Index test_per_class, std::uint64_t seed,
                                 double separation = 4.0);

/// Many-class surrogate with kernels of graded informativeness (the last ones pure noise).
KernelDataset multi_kernel_surrogate(Index classes, Index train_per_class, Index test_per_class, Index kernels,
                                     std::uint64_t seed);

/// Three well separated Gaussian clusters seen through two feature sets, one
/// informative and one noisy (no test split).
KernelDataset planted_clusters(Index clusters, Index per_cluster, std::uint64_t seed);

}  // namespace mksr
