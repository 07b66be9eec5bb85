#pragma once

// K-hyperline clustering (1-D subspace clustering), in an RKHS given only a
// Gram matrix, and its explicit Euclidean counterpart.
//
// Each cluster centroid is a unit-norm atom psi_k = phi(Y) a_k d_k where a_k is
// column k of the coefficient matrix A = Z (.) H and d_k = (a_k^T K a_k)^{-1/2}.
// One inner step is a linearized power iteration H <- K A D.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "mksr/errors.hpp"
#include "mksr/kernel.hpp"

namespace mksr {

struct KhyplOptions {
  Index k_atoms = 1;
  int inner_iters = 10;  ///< L
  int max_outer = 100;
  double convergence_tol = 1e-8;
  double norm_floor = 1e-12;
  /// Extra power steps after the memberships settle, stopping early at polish_tol
  /// or as soon as an assignment would flip.
  int polish_iters = 500;
  double polish_tol = 1e-12;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct ClusterState {
  Mat<Scalar> h;                  ///< N x K correlations, z = g(h)
  Mat<Scalar> a;                  ///< N x K, a = z (.) h
  Vec<Scalar> d;                  ///< K normalizers, diag(a^T K a)^{-1/2}
  std::vector<Index> assignment;  ///< z as one column index per row
  int outer_iterations = 0;
  bool converged = false;
  int repairs = 0;
  std::vector<double> energy_history;  ///< sum_i h(i, z_i)^2 after each assignment

  Index n() const { return a.rows(); }
  Index k_atoms() const { return a.cols(); }

  Mat<Scalar> membership() const {
    Mat<Scalar> z = Mat<Scalar>::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < assignment.size(); ++i) z(static_cast<Index>(i), assignment[i]) = Scalar(1);
    return z;
  }
};

/// splitmix64 step; used to derive independent, reproducible seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Random partition of n samples into k nonempty groups (k <= n).
inline std::vector<Index> random_partition(Index n, Index k, std::uint64_t seed) {
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= k_atoms <= sample count");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<Index> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % k;
  return out;
}

/// Column of the absolute maximum in each row; ties go to the lowest column.
template <typename Derived>
std::vector<Index> argmax_abs_rows(const Eigen::MatrixBase<Derived>& h) {
  if (!h.allFinite()) throw Error(ErrorCode::NonFiniteInput, "correlation matrix has non-finite entries");
  std::vector<Index> out(static_cast<std::size_t>(h.rows()), 0);
  for (Index i = 0; i < h.rows(); ++i) {
    Index best = 0;
    auto best_v = std::abs(h(i, 0));
    for (Index k = 1; k < h.cols(); ++k) {
      const auto v = std::abs(h(i, k));
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// g(H): binary matrix with a single 1 per row at the absolute maximum.
template <typename Derived>
Mat<typename Derived::Scalar> assign_g(const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  const auto idx = argmax_abs_rows(h);
  Mat<Scalar> z = Mat<Scalar>::Zero(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i) z(i, idx[static_cast<std::size_t>(i)]) = Scalar(1);
  return z;
}

/// diag(A^T K A), the squared RKHS norms of the unnormalized atoms phi(Y) a_k.
template <typename Scalar>
Vec<Scalar> atom_quadratic_forms(const Mat<Scalar>& a, const Mat<Scalar>& kyy) {
  return (a.array() * (kyy * a).array()).colwise().sum().transpose();
}

/// D = diag(A^T K A)^{-1/2}. Throws DegenerateAtom for a column whose quadratic
/// form is at or below norm_floor.
template <typename Scalar>
Vec<Scalar> gamma_norm(const Mat<Scalar>& a, const Mat<Scalar>& kyy, double norm_floor = 1e-12) {
  if (kyy.rows() != kyy.cols() || kyy.rows() != a.rows())
    throw Error(ErrorCode::DimensionMismatch, "coefficient rows do not match the Gram matrix");
  const Vec<Scalar> q = atom_quadratic_forms(a, kyy);
  for (Index k = 0; k < q.size(); ++k)
    if (!(q(k) > norm_floor)) throw Error(ErrorCode::DegenerateAtom, "atom " + std::to_string(k) + " has zero norm");
  return q.array().rsqrt().matrix();
}

namespace detail {

template <typename Scalar>
Mat<Scalar> select_symmetric(const Mat<Scalar>& k, const std::vector<Index>& idx) {
  const auto m = static_cast<Index>(idx.size());
  Mat<Scalar> out(m, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i) out(i, j) = k(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  return out;
}

/// Flips v so its largest-magnitude entry (lowest index on ties) is positive.
template <typename Scalar>
void canonical_sign(Vec<Scalar>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  if (v.size() > 0 && v(best) < 0) v = -v;
}

inline std::vector<std::vector<Index>> groups_of(const std::vector<Index>& assignment, Index k) {
  std::vector<std::vector<Index>> g(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < assignment.size(); ++i) g[static_cast<std::size_t>(assignment[i])].push_back(static_cast<Index>(i));
  return g;
}

/// Moves the highest-residual sample (from a cluster with at least two
/// members) into each listed cluster, seeding it as a singleton atom.
template <typename Scalar>
void repair_clusters(const std::vector<Index>& bad, std::vector<Index>& assignment, Mat<Scalar>& h,
                     const Mat<Scalar>& kyy, double norm_floor) {
  std::vector<Index> counts(static_cast<std::size_t>(h.cols()), 0);
  for (Index c : assignment) ++counts[static_cast<std::size_t>(c)];
  std::vector<bool> moved(assignment.size(), false);
  for (Index k : bad) {
    Index donor = -1;
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      const Index c = assignment[i];
      if (moved[i] || c == k || counts[static_cast<std::size_t>(c)] < 2) continue;
      const auto ii = static_cast<Index>(i);
      const Scalar resid = kyy(ii, ii) - h(ii, c) * h(ii, c);
      if (resid > best) {
        best = resid;
        donor = ii;
      }
    }
    if (donor < 0 || !(kyy(donor, donor) > norm_floor))
      throw Error(ErrorCode::DegenerateAtom, "cannot repair empty or collapsed cluster " + std::to_string(k));
    --counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(donor)])];
    ++counts[static_cast<std::size_t>(k)];
    assignment[static_cast<std::size_t>(donor)] = k;
    moved[static_cast<std::size_t>(donor)] = true;
    h(donor, k) = std::sqrt(kyy(donor, donor));
  }
}

template <typename Scalar>
Mat<Scalar> coefficients(const std::vector<Index>& assignment, const Mat<Scalar>& h) {
  Mat<Scalar> a = Mat<Scalar>::Zero(h.rows(), h.cols());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto ii = static_cast<Index>(i);
    a(ii, assignment[i]) = h(ii, assignment[i]);
  }
  return a;
}

template <typename Scalar>
std::vector<Index> degenerate_columns(const Vec<Scalar>& q, double norm_floor) {
  std::vector<Index> bad;
  for (Index k = 0; k < q.size(); ++k)
    if (!(q(k) > norm_floor)) bad.push_back(k);
  return bad;
}

}  // namespace detail

/// Initial correlations from the rank-1 decomposition of each group, computed
/// in the kernel domain: the group's top Gram eigenvector v gives the atom
/// phi(Y_C) v / sqrt(lambda).
template <typename Scalar>
Mat<Scalar> initial_correlations(const Mat<Scalar>& kyy, const std::vector<Index>& assignment, Index k_atoms,
                                 std::vector<Index>& empty_or_degenerate, double norm_floor) {
  const Index n = kyy.rows();
  Mat<Scalar> h = Mat<Scalar>::Zero(n, k_atoms);
  const auto groups = detail::groups_of(assignment, k_atoms);
  for (Index k = 0; k < k_atoms; ++k) {
    const auto& members = groups[static_cast<std::size_t>(k)];
    if (members.empty()) {
      empty_or_degenerate.push_back(k);
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(detail::select_symmetric(kyy, members));
    const Index top = es.eigenvalues().size() - 1;
    const Scalar lambda = es.eigenvalues()(top);
    if (!(lambda > norm_floor)) {
      empty_or_degenerate.push_back(k);
      continue;
    }
    Vec<Scalar> v = es.eigenvectors().col(top);
    detail::canonical_sign(v);
    Vec<Scalar> col = Vec<Scalar>::Zero(n);
    for (std::size_t m = 0; m < members.size(); ++m) col += v(static_cast<Index>(m)) * kyy.col(members[m]);
    h.col(k) = col / std::sqrt(lambda);
  }
  return h;
}

/// Kernel K-hyperline clustering from an explicit initial partition.
template <typename Scalar>
ClusterState<Scalar> k2hypl(const Mat<Scalar>& kyy, const KhyplOptions& opt, std::vector<Index> assignment) {
  const Index n = kyy.rows();
  const Index k = opt.k_atoms;
  if (kyy.cols() != n) throw Error(ErrorCode::DimensionMismatch, "Gram matrix is not square");
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= k_atoms <= sample count");
  if (static_cast<Index>(assignment.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "initial assignment length does not match the Gram matrix");
  if (!kyy.allFinite()) throw Error(ErrorCode::NonFiniteInput, "Gram matrix has non-finite entries");

  ClusterState<Scalar> st;
  std::vector<Index> bad;
  Mat<Scalar> h = initial_correlations(kyy, assignment, k, bad, opt.norm_floor);
  if (!bad.empty()) {
    detail::repair_clusters(bad, assignment, h, kyy, opt.norm_floor);
    ++st.repairs;
  }

  // One inner power step; repairs a collapsed atom at most once per outer pass.
  bool repaired_this_pass = false;
  auto power_step = [&](Mat<Scalar>& hcur) {
    Mat<Scalar> a = detail::coefficients(assignment, hcur);
    Vec<Scalar> q = atom_quadratic_forms(a, kyy);
    auto degenerate = detail::degenerate_columns(q, opt.norm_floor);
    if (!degenerate.empty()) {
      if (repaired_this_pass) throw Error(ErrorCode::DegenerateAtom, "atom collapsed again after repair");
      detail::repair_clusters(degenerate, assignment, hcur, kyy, opt.norm_floor);
      repaired_this_pass = true;
      ++st.repairs;
      a = detail::coefficients(assignment, hcur);
      q = atom_quadratic_forms(a, kyy);
      if (!detail::degenerate_columns(q, opt.norm_floor).empty())
        throw Error(ErrorCode::DegenerateAtom, "atom still degenerate after repair");
    }
    const Vec<Scalar> d = q.array().rsqrt().matrix();
    return Mat<Scalar>(kyy * a * d.asDiagonal());
  };

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    repaired_this_pass = false;
    for (int l = 0; l < opt.inner_iters; ++l) {
      Mat<Scalar> hn = power_step(h);
      const Scalar delta = (hn - h).cwiseAbs().maxCoeff();
      h.swap(hn);
      if (delta < opt.convergence_tol) break;
    }
    std::vector<Index> next = argmax_abs_rows(h);
    double energy = 0;
    for (Index i = 0; i < n; ++i) {
      const double v = static_cast<double>(h(i, next[static_cast<std::size_t>(i)]));
      energy += v * v;
    }
    st.energy_history.push_back(energy);
    st.outer_iterations = outer + 1;

    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index c : next) ++counts[static_cast<std::size_t>(c)];
    std::vector<Index> empty;
    for (Index c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] == 0) empty.push_back(c);
    if (!empty.empty()) {
      if (repaired_this_pass) throw Error(ErrorCode::DegenerateAtom, "cluster emptied again after repair");
      detail::repair_clusters(empty, next, h, kyy, opt.norm_floor);
      ++st.repairs;
    }
    if (next == assignment) {
      st.converged = true;
      break;
    }
    assignment = std::move(next);
  }

  if (st.converged) {
    repaired_this_pass = true;  // no repairs while polishing
    for (int it = 0; it < opt.polish_iters; ++it) {
      Mat<Scalar> hn = power_step(h);
      if (argmax_abs_rows(hn) != assignment) break;
      const Scalar delta = (hn - h).cwiseAbs().maxCoeff();
      h.swap(hn);
      if (delta < opt.polish_tol) break;
    }
  }

  st.h = std::move(h);
  st.assignment = std::move(assignment);
  st.a = detail::coefficients(st.assignment, st.h);
  st.d = gamma_norm(st.a, kyy, opt.norm_floor);
  return st;
}

/// Kernel K-hyperline clustering from a seeded random partition.
template <typename Scalar>
ClusterState<Scalar> k2hypl(const Mat<Scalar>& kyy, const KhyplOptions& opt) {
  return k2hypl(kyy, opt, random_partition(kyy.rows(), opt.k_atoms, opt.seed));
}

template <typename Scalar>
struct EuclideanKhypl {
  Mat<Scalar> dictionary;  ///< M x K, unit columns
  ClusterState<Scalar> state;
};

/// K-hyperline clustering with explicit data Y (M x N): H = Y^T Psi,
/// Psi = Y A Gamma(Y A)^{-1}. Empty or collapsed clusters are errors here.
template <typename Scalar>
EuclideanKhypl<Scalar> khypl_euclidean(const Mat<Scalar>& y, const KhyplOptions& opt, std::vector<Index> assignment) {
  const Index n = y.cols();
  const Index k = opt.k_atoms;
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= k_atoms <= sample count");
  if (static_cast<Index>(assignment.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "initial assignment length does not match the data");
  if (y.size() == 0 || y.cwiseAbs().maxCoeff() == 0) throw Error(ErrorCode::InvalidArgument, "data is all zero");

  EuclideanKhypl<Scalar> out;
  Mat<Scalar> psi(y.rows(), k);
  const auto groups = detail::groups_of(assignment, k);
  for (Index c = 0; c < k; ++c) {
    const auto& members = groups[static_cast<std::size_t>(c)];
    if (members.empty()) throw Error(ErrorCode::DegenerateAtom, "empty initial group");
    Mat<Scalar> yc(y.rows(), static_cast<Index>(members.size()));
    for (std::size_t m = 0; m < members.size(); ++m) yc.col(static_cast<Index>(m)) = y.col(members[m]);
    Eigen::JacobiSVD<Mat<Scalar>> svd(yc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (!(svd.singularValues()(0) * svd.singularValues()(0) > opt.norm_floor))
      throw Error(ErrorCode::DegenerateAtom, "initial group has zero energy");
    // Same sign convention as the kernel route: the member with the largest
    // right-singular-vector entry correlates positively with the atom.
    const Vec<Scalar> v = svd.matrixV().col(0);
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
      if (std::abs(v(i)) > std::abs(v(best))) best = i;
    psi.col(c) = v(best) < 0 ? Vec<Scalar>(-svd.matrixU().col(0)) : Vec<Scalar>(svd.matrixU().col(0));
  }
  Mat<Scalar> h = y.transpose() * psi;

  auto update = [&](const Mat<Scalar>& hcur) {
    const Mat<Scalar> a = detail::coefficients(assignment, hcur);
    Mat<Scalar> ya = y * a;
    for (Index c = 0; c < k; ++c) {
      const Scalar nrm = ya.col(c).norm();
      if (!(nrm * nrm > opt.norm_floor)) throw Error(ErrorCode::DegenerateAtom, "atom collapsed");
      ya.col(c) /= nrm;
    }
    psi = ya;
    return Mat<Scalar>(y.transpose() * psi);
  };

  auto& st = out.state;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    for (int l = 0; l < opt.inner_iters; ++l) {
      Mat<Scalar> hn = update(h);
      const Scalar delta = (hn - h).cwiseAbs().maxCoeff();
      h.swap(hn);
      if (delta < opt.convergence_tol) break;
    }
    std::vector<Index> next = argmax_abs_rows(h);
    double energy = 0;
    for (Index i = 0; i < n; ++i) {
      const double v = static_cast<double>(h(i, next[static_cast<std::size_t>(i)]));
      energy += v * v;
    }
    st.energy_history.push_back(energy);
    st.outer_iterations = outer + 1;
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index c : next) ++counts[static_cast<std::size_t>(c)];
    if (std::find(counts.begin(), counts.end(), Index{0}) != counts.end())
      throw Error(ErrorCode::DegenerateAtom, "cluster became empty");
    if (next == assignment) {
      st.converged = true;
      break;
    }
    assignment = std::move(next);
  }
  if (st.converged) {
    for (int it = 0; it < opt.polish_iters; ++it) {
      Mat<Scalar> hn = update(h);
      if (argmax_abs_rows(hn) != assignment) break;
      const Scalar delta = (hn - h).cwiseAbs().maxCoeff();
      h.swap(hn);
      if (delta < opt.polish_tol) break;
    }
  }
  st.h = h;
  st.assignment = std::move(assignment);
  st.a = detail::coefficients(st.assignment, st.h);
  // Final atoms are built from the final coefficients, as in the kernel variant.
  Mat<Scalar> ya = y * st.a;
  st.d.resize(k);
  for (Index c = 0; c < k; ++c) {
    const Scalar nrm = ya.col(c).norm();
    if (!(nrm * nrm > opt.norm_floor)) throw Error(ErrorCode::DegenerateAtom, "atom collapsed");
    st.d(c) = Scalar(1) / nrm;
    ya.col(c) /= nrm;
  }
  out.dictionary = ya;
  return out;
}

template <typename Scalar>
EuclideanKhypl<Scalar> khypl_euclidean(const Mat<Scalar>& y, const KhyplOptions& opt) {
  return khypl_euclidean(y, opt, random_partition(y.cols(), opt.k_atoms, opt.seed));
}

}  // namespace mksr
