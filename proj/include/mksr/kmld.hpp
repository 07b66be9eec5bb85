#pragma once

// Kernel multilevel dictionary learning and levelwise pursuit.
//
// Level s clusters the residuals phi(Y) P_{s-1}, with
//   P_0 = I,   P_s = P_{s-1} (I - A_s D_s A_s^T),
// so its Gram matrix is P_{s-1}^T K P_{s-1}. The atoms of level s are
// phi(Y) C_s with C_s = P_{s-1} A_s D_s.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mksr/errors.hpp"
#include "mksr/k2hypl.hpp"
#include "mksr/kernel.hpp"

namespace mksr {

struct KmldOptions {
  Index s_levels = 1;
  /// One entry for every level, or a single entry applied to all of them.
  std::vector<Index> k_atoms{1};
  int inner_iters = 10;
  int max_outer = 100;
  double convergence_tol = 1e-8;
  double norm_floor = 1e-12;
  double collapse_ratio = 1e-10;
  std::uint64_t seed = 0;

  Index atoms_at(Index level) const {
    if (k_atoms.empty()) throw Error(ErrorCode::InvalidArgument, "k_atoms is empty");
    if (k_atoms.size() == 1) return k_atoms.front();
    if (static_cast<Index>(k_atoms.size()) != s_levels)
      throw Error(ErrorCode::InvalidArgument, "k_atoms list must have one entry per level");
    return k_atoms[static_cast<std::size_t>(level)];
  }
};

template <typename Scalar>
struct LevelState {
  Mat<Scalar> a;                  ///< N x K coefficients
  Vec<Scalar> d;                  ///< K normalizers (diagonal of D_s)
  std::vector<Index> assignment;  ///< Z_s as one column index per sample

  Index k_atoms() const { return a.cols(); }
};

template <typename Scalar>
struct MultilevelDictionary {
  std::vector<LevelState<Scalar>> levels;
  Index n = 0;
  Index requested_levels = 0;
  std::uint64_t kernel_fingerprint = 0;
  /// True when training stopped early because the residual energy vanished.
  bool collapsed = false;

  Index level_count() const { return static_cast<Index>(levels.size()); }
  Index code_length() const {
    Index total = 0;
    for (const auto& l : levels) total += l.k_atoms();
    return total;
  }
  /// Offset of level s inside a stacked code.
  Index offset(Index s) const {
    Index off = 0;
    for (Index t = 0; t < s; ++t) off += levels[static_cast<std::size_t>(t)].k_atoms();
    return off;
  }
};

/// Seed used for the random partition of level s; level 0 uses the master seed.
inline std::uint64_t level_seed(std::uint64_t seed, Index level) {
  return level == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(level));
}

/// P_s = prod_{t<s} (I - A_t D_t A_t^T), applied in level order.
template <typename Scalar>
Mat<Scalar> residual_projector(const std::vector<LevelState<Scalar>>& levels, Index s, Index n) {
  if (s < 0 || s > static_cast<Index>(levels.size()))
    throw Error(ErrorCode::InvalidArgument, "level index out of range");
  Mat<Scalar> p = Mat<Scalar>::Identity(n, n);
  for (Index t = 0; t < s; ++t) {
    const auto& l = levels[static_cast<std::size_t>(t)];
    if (l.a.rows() != n || l.d.size() != l.a.cols())
      throw Error(ErrorCode::DimensionMismatch, "level state does not match the sample count");
    p -= (p * l.a) * l.d.asDiagonal() * l.a.transpose();
  }
  return p;
}

/// Gram matrix of the level-s training residuals, P^T K P (symmetrized).
template <typename Scalar>
Mat<Scalar> effective_kernel(const Mat<Scalar>& kyy, const Mat<Scalar>& p) {
  Mat<Scalar> keff = p.transpose() * kyy * p;
  return (keff + keff.transpose()) / Scalar(2);
}

template <typename Scalar>
MultilevelDictionary<Scalar> train_kmld(const Mat<Scalar>& kyy, const KmldOptions& opt) {
  const Index n = kyy.rows();
  if (kyy.cols() != n) throw Error(ErrorCode::DimensionMismatch, "Gram matrix is not square");
  if (opt.s_levels < 1) throw Error(ErrorCode::InvalidArgument, "s_levels must be at least 1");
  const Scalar base_trace = kyy.trace();
  if (!(base_trace > Scalar(0))) throw Error(ErrorCode::ZeroTrace, "Gram matrix has nonpositive trace");

  MultilevelDictionary<Scalar> mld;
  mld.n = n;
  mld.requested_levels = opt.s_levels;
  mld.kernel_fingerprint = fingerprint(kyy);

  Mat<Scalar> p = Mat<Scalar>::Identity(n, n);
  for (Index s = 0; s < opt.s_levels; ++s) {
    const Mat<Scalar> keff = s == 0 ? kyy : effective_kernel(kyy, p);
    if (keff.trace() < opt.collapse_ratio * base_trace) {
      mld.collapsed = true;
      break;
    }
    KhyplOptions ko;
    ko.k_atoms = opt.atoms_at(s);
    ko.inner_iters = opt.inner_iters;
    ko.max_outer = opt.max_outer;
    ko.convergence_tol = opt.convergence_tol;
    ko.norm_floor = opt.norm_floor;
    ko.seed = level_seed(opt.seed, s);
    ClusterState<Scalar> st = k2hypl(keff, ko);

    LevelState<Scalar> level{std::move(st.a), std::move(st.d), std::move(st.assignment)};
    p -= (p * level.a) * level.d.asDiagonal() * level.a.transpose();
    mld.levels.push_back(std::move(level));
  }
  return mld;
}

/// Levelwise pursuit against a trained dictionary. Construction binds the
/// dictionary to its training Gram matrix and caches the atom expansions
/// C_s = P_{s-1} A_s D_s and their cross Gram blocks C_t^T K C_s.
template <typename Scalar>
class Encoder {
 public:
  Encoder(const Mat<Scalar>& kyy, const MultilevelDictionary<Scalar>& mld) : mld_(&mld), kyy_(&kyy) {
    if (kyy.rows() != mld.n || kyy.cols() != mld.n)
      throw Error(ErrorCode::DimensionMismatch, "Gram matrix size does not match the dictionary");
    if (fingerprint(kyy) != mld.kernel_fingerprint)
      throw Error(ErrorCode::FingerprintMismatch, "Gram matrix is not the one the dictionary was trained on");
    const auto s_count = static_cast<std::size_t>(mld.level_count());
    atoms_.reserve(s_count);
    Mat<Scalar> p = Mat<Scalar>::Identity(mld.n, mld.n);
    for (const auto& l : mld.levels) {
      const Mat<Scalar> pa = p * l.a;
      atoms_.push_back(pa * l.d.asDiagonal());
      p -= pa * l.d.asDiagonal() * l.a.transpose();
    }
    katoms_.reserve(s_count);
    for (const auto& c : atoms_) katoms_.push_back(kyy * c);
    cross_.assign(s_count, std::vector<Mat<Scalar>>(s_count));
    for (std::size_t t = 0; t < s_count; ++t)
      for (std::size_t s = t + 1; s < s_count; ++s) cross_[t][s] = atoms_[t].transpose() * katoms_[s];
  }

  const MultilevelDictionary<Scalar>& dictionary() const { return *mld_; }
  /// Atom expansion coefficients C_s (N x K_s).
  const Mat<Scalar>& atoms(Index s) const { return atoms_[static_cast<std::size_t>(s)]; }

  /// Stacked code of length sum_s K_s with at most one nonzero per level.
  Vec<Scalar> encode(const RowVec<Scalar>& kxy) const {
    if (kxy.size() != mld_->n) throw Error(ErrorCode::DimensionMismatch, "cross-kernel row has the wrong length");
    const auto s_count = static_cast<std::size_t>(mld_->level_count());
    Vec<Scalar> code = Vec<Scalar>::Zero(mld_->code_length());
    std::vector<Index> picked(s_count);
    std::vector<Scalar> value(s_count);
    Index off = 0;
    for (std::size_t s = 0; s < s_count; ++s) {
      RowVec<Scalar> alpha = kxy * atoms_[s];
      for (std::size_t t = 0; t < s; ++t) alpha -= value[t] * cross_[t][s].row(picked[t]);
      const Index k = argmax_abs_rows(alpha)[0];
      picked[s] = k;
      value[s] = alpha(k);
      code(off + k) = alpha(k);
      off += atoms_[s].cols();
    }
    return code;
  }

  /// Encodes every row of an M x N cross-kernel block; returns code_length x M.
  Mat<Scalar> encode_rows(const Mat<Scalar>& kxy) const {
    Mat<Scalar> out(mld_->code_length(), kxy.rows());
    for (Index m = 0; m < kxy.rows(); ++m) out.col(m) = encode(kxy.row(m));
    return out;
  }

  /// ||phi(x) - phi(Psi) a||^2 using the first `levels` levels of the code,
  /// entirely from Gram quantities; small negative round-off is clipped to 0.
  Scalar reconstruction_energy(Scalar kxx, const RowVec<Scalar>& kxy, const Vec<Scalar>& code,
                               Index levels = -1) const {
    if (kxy.size() != mld_->n) throw Error(ErrorCode::DimensionMismatch, "cross-kernel row has the wrong length");
    if (code.size() != mld_->code_length()) throw Error(ErrorCode::DimensionMismatch, "code has the wrong length");
    if (levels < 0 || levels > mld_->level_count()) levels = mld_->level_count();
    Vec<Scalar> c = Vec<Scalar>::Zero(mld_->n);
    Index off = 0;
    for (Index s = 0; s < levels; ++s) {
      const auto& atoms = atoms_[static_cast<std::size_t>(s)];
      c += atoms * code.segment(off, atoms.cols());
      off += atoms.cols();
    }
    const Scalar e = kxx - Scalar(2) * kxy.dot(c) + c.dot(*kyy_ * c);
    return e < Scalar(0) ? Scalar(0) : e;
  }

 private:
  const MultilevelDictionary<Scalar>* mld_;
  const Mat<Scalar>* kyy_;
  std::vector<Mat<Scalar>> atoms_;
  std::vector<Mat<Scalar>> katoms_;
  std::vector<std::vector<Mat<Scalar>>> cross_;
};

template <typename Scalar>
Vec<Scalar> encode(const RowVec<Scalar>& kxy, const Mat<Scalar>& kyy, const MultilevelDictionary<Scalar>& mld) {
  return Encoder<Scalar>(kyy, mld).encode(kxy);
}

template <typename Scalar>
Scalar reconstruction_energy(Scalar kxx, const RowVec<Scalar>& kxy, const Mat<Scalar>& kyy,
                             const MultilevelDictionary<Scalar>& mld, const Vec<Scalar>& code, Index levels = -1) {
  return Encoder<Scalar>(kyy, mld).reconstruction_energy(kxx, kxy, code, levels);
}

/// Per-level sparsity check: at most one nonzero in every level block.
template <typename Scalar>
bool is_levelwise_sparse(const MultilevelDictionary<Scalar>& mld, const Vec<Scalar>& code) {
  Index off = 0;
  for (const auto& l : mld.levels) {
    if ((code.segment(off, l.k_atoms()).array() != Scalar(0)).count() > 1) return false;
    off += l.k_atoms();
  }
  return true;
}

}  // namespace mksr
