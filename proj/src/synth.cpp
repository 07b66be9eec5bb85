#include "mksr/synth.hpp"

#include <random>

#include "mksr/errors.hpp"
#include "mksr/k2hypl.hpp"

namespace mksr {

namespace {

MatrixXd normal_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

VectorXd random_direction(Index dim, std::mt19937_64& rng) {
  VectorXd v = normal_matrix(dim, 1, rng).col(0);
  return v / v.norm();
}

/// Class means at distance `separation` from the origin, along orthonormal
/// directions when the dimension allows it.
MatrixXd class_means(Index classes, Index dim, double separation, std::mt19937_64& rng) {
  MatrixXd means(dim, classes);
  if (classes <= dim) {
    const Eigen::HouseholderQR<MatrixXd> qr(normal_matrix(dim, classes, rng));
    means = separation * (qr.householderQ() * MatrixXd::Identity(dim, classes));
  } else {
    for (Index c = 0; c < classes; ++c) means.col(c) = separation * random_direction(dim, rng);
  }
  return means;
}

MatrixXd sample_around(const MatrixXd& means, const std::vector<int>& labels, std::mt19937_64& rng) {
  MatrixXd x = normal_matrix(means.rows(), static_cast<Index>(labels.size()), rng);
  for (std::size_t i = 0; i < labels.size(); ++i) x.col(static_cast<Index>(i)) += means.col(labels[i]);
  return x;
}

std::vector<int> grouped_labels(Index classes, Index per_class) {
  std::vector<int> labels;
  for (Index c = 0; c < classes; ++c)
    for (Index i = 0; i < per_class; ++i) labels.push_back(static_cast<int>(c));
  return labels;
}

void check_counts(Index classes, Index per_class) {
  if (classes < 1 || per_class < 1) throw Error(ErrorCode::InvalidArgument, "class and sample counts must be positive");
}

/// Adds one feature view with the given class separation (0 = label-independent).
void add_view(KernelDataset& ds, const std::string& id, Index dim, double separation, Index classes,
              std::mt19937_64& rng) {
  const MatrixXd means = class_means(classes, dim, separation, rng);
  const MatrixXd xtr = sample_around(means, ds.train_labels, rng);
  const MatrixXd xte = sample_around(means, ds.test_labels, rng);
  ds.ids.push_back(id);
  ds.train.push_back(squared_distances(xtr, xtr));
  ds.cross.push_back(squared_distances(xte, xtr));
  ds.informativeness.push_back(separation);
}

}  // namespace

MatrixXd squared_distances(const MatrixXd& x, const MatrixXd& y) {
  if (x.rows() != y.rows()) throw Error(ErrorCode::DimensionMismatch, "feature dimensions differ");
  MatrixXd d(x.cols(), y.cols());
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < x.cols(); ++i) d(i, j) = (x.col(i) - y.col(j)).squaredNorm();
  return d;
}

FeatureData gaussian_classes(Index classes, Index per_class, Index dim, double separation, std::uint64_t seed) {
  check_counts(classes, per_class);
  std::mt19937_64 rng(seed);
  FeatureData f;
  f.labels = grouped_labels(classes, per_class);
  f.x = sample_around(class_means(classes, dim, separation, rng), f.labels, rng);
  return f;
}

FeatureData planted_subspaces(Index ambient, Index subspaces, Index per_subspace, double noise, std::uint64_t seed) {
  check_counts(subspaces, per_subspace);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd dirs(ambient, subspaces);
  for (Index c = 0; c < subspaces; ++c) dirs.col(c) = random_direction(ambient, rng);
  FeatureData f;
  f.labels = grouped_labels(subspaces, per_subspace);
  f.x.resize(ambient, static_cast<Index>(f.labels.size()));
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    const double t = nd(rng);
    f.x.col(static_cast<Index>(i)) = t * dirs.col(f.labels[i]) + noise * normal_matrix(ambient, 1, rng).col(0);
  }
  return f;
}

KernelDataset two_kernel_planted(Index classes, Index train_per_class, Index test_per_class, std::uint64_t seed,
                                 double separation) {
  check_counts(classes, train_per_class);
  std::mt19937_64 rng(seed);
  KernelDataset ds;
  ds.train_labels = grouped_labels(classes, train_per_class);
  ds.test_labels = grouped_labels(classes, test_per_class);
  add_view(ds, "noise", 5, 0.0, classes, rng);
  add_view(ds, "informative", 5, separation, classes, rng);
  return ds;
}

KernelDataset multi_kernel_surrogate(Index classes, Index train_per_class, Index test_per_class, Index kernels,
                                     std::uint64_t seed) {
  check_counts(classes, train_per_class);
  if (kernels < 1) throw Error(ErrorCode::InvalidArgument, "kernel count must be positive");
  std::mt19937_64 rng(seed);
  KernelDataset ds;
  ds.train_labels = grouped_labels(classes, train_per_class);
  ds.test_labels = grouped_labels(classes, test_per_class);
  for (Index r = 0; r < kernels; ++r) {
    // Separation falls from 3 to 0 across the kernels; the last one is noise.
    const double sep = kernels == 1 ? 3.0 : 3.0 * static_cast<double>(kernels - 1 - r) / static_cast<double>(kernels - 1);
    add_view(ds, "view" + std::to_string(r), 8 + 2 * r, sep, classes, rng);
  }
  return ds;
}

KernelDataset planted_clusters(Index clusters, Index per_cluster, std::uint64_t seed) {
  check_counts(clusters, per_cluster);
  std::mt19937_64 rng(seed);
  KernelDataset ds;
  ds.train_labels = grouped_labels(clusters, per_cluster);
  add_view(ds, "informative", 4, 5.0, clusters, rng);
  add_view(ds, "noise", 4, 0.0, clusters, rng);
  return ds;
}

}  // namespace mksr
