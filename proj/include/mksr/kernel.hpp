#pragma once

// Kernel construction, validation and nonnegative combination.
//
// Everything here works on precomputed Gram (or distance) matrices; the
// feature map is never materialized.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "mksr/errors.hpp"

namespace mksr {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;
using RowVectorXd = RowVec<double>;

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kPsdTol = 1e-8;

/// How the RBF bandwidth is chosen when turning distances into a kernel.
struct GammaPolicy {
  enum class Kind { MeanInverse, Explicit };
  Kind kind = Kind::MeanInverse;
  double gamma = 0.0;

  static GammaPolicy mean_inverse() { return {Kind::MeanInverse, 0.0}; }
  static GammaPolicy explicit_value(double g) { return {Kind::Explicit, g}; }
};

template <typename Scalar>
struct KernelMatrix {
  Mat<Scalar> values;
  Scalar gamma = Scalar(0);
  std::string source_id;
  /// Factor the raw kernel was divided by in normalize_kernel (1 if never normalized).
  Scalar scale = Scalar(1);

  Index n() const { return values.rows(); }
};

template <typename Scalar>
struct KernelSet {
  std::vector<KernelMatrix<Scalar>> kernels;

  Index size() const { return static_cast<Index>(kernels.size()); }
  Index n() const { return kernels.empty() ? 0 : kernels.front().n(); }
  const Mat<Scalar>& operator[](Index r) const { return kernels[static_cast<std::size_t>(r)].values; }
};

template <typename Scalar>
struct EnsembleKernel {
  Mat<Scalar> values;
  Vec<Scalar> weights;
};

struct ValidationReport {
  double symmetry_defect = 0.0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool finite = true;
  bool symmetric = true;
  bool psd = true;

  bool pass() const { return finite && symmetric && psd; }
};

template <typename Derived>
typename Derived::Scalar symmetry_defect(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) return std::numeric_limits<Scalar>::infinity();
  if (m.size() == 0) return Scalar(0);
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Mean of the off-diagonal entries of a square matrix.
template <typename Derived>
typename Derived::Scalar mean_off_diagonal(const Eigen::MatrixBase<Derived>& d) {
  using Scalar = typename Derived::Scalar;
  const Index n = d.rows();
  if (n < 2) return Scalar(0);
  const Scalar total = d.sum() - d.diagonal().sum();
  return total / static_cast<Scalar>(n * (n - 1));
}

template <typename Derived>
void check_distance_matrix(const Eigen::MatrixBase<Derived>& d) {
  if (d.rows() != d.cols()) throw Error(ErrorCode::DimensionMismatch, "distance matrix is not square");
  if (!d.allFinite()) throw Error(ErrorCode::NonFiniteInput, "distance matrix has non-finite entries");
  if (symmetry_defect(d) > kSymmetryTol) throw Error(ErrorCode::AsymmetricInput, "distance matrix is not symmetric");
  if (d.size() > 0 && d.minCoeff() < 0) throw Error(ErrorCode::InvalidArgument, "distance matrix has negative entries");
  if (d.size() > 0 && d.diagonal().cwiseAbs().maxCoeff() != 0)
    throw Error(ErrorCode::InvalidArgument, "distance matrix has a nonzero diagonal");
}

/// K(i,j) = exp(-gamma * d(i,j)), with gamma = 1 / mean off-diagonal distance
/// under the MeanInverse policy.
template <typename Derived>
KernelMatrix<typename Derived::Scalar> kernel_from_distances(const Eigen::MatrixBase<Derived>& d,
                                                             GammaPolicy policy,
                                                             std::string source_id = {}) {
  using Scalar = typename Derived::Scalar;
  check_distance_matrix(d);
  Scalar gamma;
  if (policy.kind == GammaPolicy::Kind::MeanInverse) {
    const Scalar mean = mean_off_diagonal(d);
    if (!(mean > Scalar(0)))
      throw Error(ErrorCode::AllZeroDistances, "mean distance is zero; supply an explicit gamma");
    gamma = Scalar(1) / mean;
  } else {
    if (!(policy.gamma > 0) || !std::isfinite(policy.gamma))
      throw Error(ErrorCode::InvalidArgument, "gamma must be positive and finite");
    gamma = static_cast<Scalar>(policy.gamma);
  }
  KernelMatrix<Scalar> k;
  k.values = (-gamma * d.derived().array()).exp().matrix();
  k.values.diagonal().setOnes();
  k.gamma = gamma;
  k.source_id = std::move(source_id);
  return k;
}

/// Cross-kernel rows exp(-gamma * d) for test-to-train distances (no symmetry requirement).
template <typename Derived>
Mat<typename Derived::Scalar> cross_kernel_from_distances(const Eigen::MatrixBase<Derived>& d,
                                                          typename Derived::Scalar gamma) {
  if (!d.allFinite()) throw Error(ErrorCode::NonFiniteInput, "cross distances have non-finite entries");
  if (d.size() > 0 && d.minCoeff() < 0) throw Error(ErrorCode::InvalidArgument, "negative cross distance");
  return (-gamma * d.derived().array()).exp().matrix();
}

template <typename Derived>
ValidationReport validate_kernel(const Eigen::MatrixBase<Derived>& k, double psd_tol = kPsdTol) {
  using Scalar = typename Derived::Scalar;
  ValidationReport rep;
  if (k.rows() != k.cols()) throw Error(ErrorCode::DimensionMismatch, "kernel matrix is not square");
  rep.finite = k.allFinite();
  if (!rep.finite) {
    rep.symmetric = rep.psd = false;
    return rep;
  }
  rep.symmetry_defect = static_cast<double>(symmetry_defect(k));
  rep.symmetric = rep.symmetry_defect <= kSymmetryTol;
  if (k.size() == 0) return rep;
  const Mat<Scalar> sym = (k + k.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  rep.min_eigenvalue = static_cast<double>(es.eigenvalues()(0));
  rep.max_eigenvalue = static_cast<double>(es.eigenvalues()(es.eigenvalues().size() - 1));
  const double scale = std::max(std::abs(rep.max_eigenvalue), std::numeric_limits<double>::min());
  rep.psd = rep.min_eigenvalue >= -psd_tol * scale;
  return rep;
}

/// Accepts a kernel that is PSD up to a relative tolerance, shifting the
/// diagonal by -lambda_min when a tiny negative eigenvalue is present.
/// Throws when the matrix is asymmetric or clearly indefinite.
template <typename Scalar>
KernelMatrix<Scalar> admit_kernel(KernelMatrix<Scalar> k, double psd_tol = kPsdTol) {
  const ValidationReport rep = validate_kernel(k.values, psd_tol);
  if (!rep.finite) throw Error(ErrorCode::NonFiniteInput, "kernel '" + k.source_id + "' has non-finite entries");
  if (!rep.symmetric) throw Error(ErrorCode::AsymmetricInput, "kernel '" + k.source_id + "' is not symmetric");
  if (!rep.psd)
    throw Error(ErrorCode::NotPositiveSemidefinite,
                "kernel '" + k.source_id + "' has eigenvalue " + std::to_string(rep.min_eigenvalue));
  k.values = (k.values + k.values.transpose()).eval() / Scalar(2);
  if (rep.min_eigenvalue < 0) k.values.diagonal().array() -= static_cast<Scalar>(rep.min_eigenvalue);
  return k;
}

/// Rescales so the mean diagonal entry is 1.
template <typename Scalar>
KernelMatrix<Scalar> normalize_kernel(KernelMatrix<Scalar> k) {
  if (k.n() == 0) throw Error(ErrorCode::ZeroTrace, "empty kernel");
  const Scalar mean_diag = k.values.diagonal().mean();
  if (!(mean_diag > Scalar(0))) throw Error(ErrorCode::ZeroTrace, "kernel '" + k.source_id + "' has nonpositive trace");
  k.values /= mean_diag;
  k.scale *= mean_diag;
  return k;
}

template <typename Scalar>
void check_weights(const KernelSet<Scalar>& ks, const Vec<Scalar>& beta) {
  if (ks.size() < 1) throw Error(ErrorCode::InvalidArgument, "kernel set is empty");
  if (beta.size() != ks.size())
    throw Error(ErrorCode::DimensionMismatch, "weight vector length does not match kernel count");
  if (!beta.allFinite()) throw Error(ErrorCode::NonFiniteInput, "kernel weights are not finite");
  if (beta.minCoeff() < 0) throw Error(ErrorCode::NegativeWeight, "kernel weights must be nonnegative");
  if (beta.maxCoeff() == 0) throw Error(ErrorCode::InvalidArgument, "kernel weights are all zero");
}

template <typename Scalar>
void check_kernel_set(const KernelSet<Scalar>& ks) {
  if (ks.size() < 1) throw Error(ErrorCode::InvalidArgument, "kernel set is empty");
  const Index n = ks.n();
  for (const auto& k : ks.kernels) {
    if (k.values.rows() != n || k.values.cols() != n)
      throw Error(ErrorCode::DimensionMismatch, "kernel '" + k.source_id + "' has a different size");
  }
}

/// Sum_r beta_r K_r.
template <typename Scalar>
EnsembleKernel<Scalar> ensemble(const KernelSet<Scalar>& ks, const Vec<Scalar>& beta) {
  check_kernel_set(ks);
  check_weights(ks, beta);
  EnsembleKernel<Scalar> out;
  out.values = Mat<Scalar>::Zero(ks.n(), ks.n());
  for (Index r = 0; r < ks.size(); ++r) out.values += beta(r) * ks[r];
  out.weights = beta;
  return out;
}

/// Combines per-kernel cross rows (each M x N, row m = K_r(x_m, .)) with the
/// same weights used for the training ensemble.
template <typename Scalar>
Mat<Scalar> cross_ensemble(const std::vector<Mat<Scalar>>& rows, const Vec<Scalar>& beta) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no cross-kernel rows");
  if (static_cast<Index>(rows.size()) != beta.size())
    throw Error(ErrorCode::DimensionMismatch, "cross rows and weights disagree on kernel count");
  if (beta.minCoeff() < 0) throw Error(ErrorCode::NegativeWeight, "kernel weights must be nonnegative");
  Mat<Scalar> out = Mat<Scalar>::Zero(rows.front().rows(), rows.front().cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].rows() != out.rows() || rows[r].cols() != out.cols())
      throw Error(ErrorCode::DimensionMismatch, "cross-kernel rows have inconsistent shapes");
    out += beta(static_cast<Index>(r)) * rows[r];
  }
  return out;
}

/// FNV-1a over the shape and raw bytes of a matrix.
template <typename Derived>
std::uint64_t fingerprint(const Eigen::MatrixBase<Derived>& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::int64_t rows = m.rows(), cols = m.cols();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) {
      const double v = static_cast<double>(m(i, j));
      mix(&v, sizeof v);
    }
  return h;
}

}  // namespace mksr
