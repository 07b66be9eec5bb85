#pragma once

// Downstream evaluation: spectral clustering, a ridge classifier over sparse
// codes, and classification / clustering metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mksr/kernel.hpp"

namespace mksr {

struct KMeansResult {
  std::vector<int> labels;
  MatrixXd centroids;  ///< k x dim
  double inertia = 0.0;
};

/// k-means++ seeding plus Lloyd iterations on the rows of `points`; the best
/// of `restarts` runs by inertia is returned. Labels are renumbered in order
/// of first appearance.
KMeansResult kmeans(const MatrixXd& points, Index k, std::uint64_t seed, int restarts = 20, int max_iter = 300);

/// Normalized spectral clustering of a symmetric nonnegative affinity matrix.
std::vector<int> spectral_cluster(const MatrixXd& w, Index k, std::uint64_t seed);

struct LinearClassifier {
  MatrixXd weights;  ///< classes x dim
  VectorXd bias;     ///< classes

  Index classes() const { return weights.rows(); }
  /// classes x M score matrix for dim x M codes.
  MatrixXd scores(const MatrixXd& codes) const;
  /// Argmax class per column; ties go to the lowest class id.
  std::vector<int> predict(const MatrixXd& codes) const;
};

/// One-vs-rest ridge regression to +-1 targets with an unpenalized intercept.
LinearClassifier train_linear_classifier(const MatrixXd& codes, std::span<const int> labels, double ridge);

enum class Task { Classify, Cluster };

struct MetricReport {
  Task task = Task::Classify;
  double accuracy = 0.0;  ///< best-permutation accuracy for clustering
  double per_class_accuracy = 0.0;
  double nmi = 0.0;
  Eigen::MatrixXi confusion;  ///< rows: truth, columns: prediction

  std::string to_key_value() const;
  std::string to_csv() const;
};

MetricReport score(std::span<const int> predicted, std::span<const int> truth, Task task);

double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

/// Maximum-weight perfect matching on a square matrix; result[row] = column.
std::vector<Index> max_weight_assignment(const MatrixXd& weight);

}  // namespace mksr
