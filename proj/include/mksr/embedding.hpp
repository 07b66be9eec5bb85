#pragma once

// Discriminative multiple-kernel graph embedding.
//
// For basis coefficients U (N x d) and kernel weights beta (length R), sample i
// projects to U^T KK_i beta, where the slice KK_i (N x R) holds column i of
// every base kernel. U and beta are optimized alternately: U by a trace-ratio
// iteration, beta by a semidefinite relaxation followed by local refinement.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mksr/kernel.hpp"

namespace mksr {

enum class GraphMode { Supervised, Unsupervised };

/// How a graph enters a scatter matrix. Pairwise: sum_ij w_ij (x_i - x_j)(x_i - x_j)^T.
/// Diagonal: sum_i g_ii x_i x_i^T, used for the degree-matrix constraint.
enum class ScatterForm { Pairwise, Diagonal };

struct AffinityGraphs {
  MatrixXd w;        ///< intra-class (or similarity) weights
  MatrixXd w_prime;  ///< inter-class weights, or the degree matrix in unsupervised mode
  GraphMode mode = GraphMode::Supervised;

  ScatterForm penalty_form() const {
    return mode == GraphMode::Unsupervised ? ScatterForm::Diagonal : ScatterForm::Pairwise;
  }
};

struct KernelSliceStack {
  std::vector<MatrixXd> slices;  ///< slices[i](n, r) = K_r(y_n, y_i)

  Index n() const { return static_cast<Index>(slices.size()); }
  Index r() const { return slices.empty() ? 0 : slices.front().cols(); }
  /// Reassembles base kernel r from the slices.
  MatrixXd kernel(Index r) const;
  /// Sum_r beta_r K_r, i.e. column i is slices[i] * beta.
  MatrixXd combined(const VectorXd& beta) const;
};

/// Binary tau-nearest-neighbour affinities averaged over kernels and symmetrized
/// by max. Intra-class neighbours populate w, inter-class ones w_prime.
AffinityGraphs init_affinities(const KernelSet<double>& ks, std::span<const int> labels, Index tau,
                               Index tau_prime);

/// Label-free variant: tau neighbours among all samples, w_prime = degree matrix.
AffinityGraphs init_affinities_unsupervised(const KernelSet<double>& ks, Index tau);

/// Diagonal matrix of the row sums of w.
MatrixXd degree_matrix(const MatrixXd& w);

KernelSliceStack build_slices(const KernelSet<double>& ks);

/// The N x N matrix L with sum_ij w_ij (x_i - x_j)(x_i - x_j)^T = X L X^T for
/// the columns x_i of X; in Diagonal form it is diag(graph).
MatrixXd graph_operator(const MatrixXd& graph, ScatterForm form);

/// S^beta = sum_ij w_ij (KK_i - KK_j) beta beta^T (KK_i - KK_j)^T  (N x N).
MatrixXd scatter_beta(const KernelSliceStack& slices, const VectorXd& beta, const MatrixXd& graph,
                      ScatterForm form = ScatterForm::Pairwise);

/// S^U = sum_ij w_ij (KK_i - KK_j)^T U U^T (KK_i - KK_j)  (R x R).
MatrixXd scatter_u(const KernelSliceStack& slices, const MatrixXd& u, const MatrixXd& graph,
                   ScatterForm form = ScatterForm::Pairwise);

struct TraceRatioOptions {
  int max_iter = 200;
  double tol = 1e-9;
  double ridge = 1e-8;  ///< relative to trace(S_wp) / dim
  /// Starting ratio; NaN means trace(S_w) / trace(S_wp).
  double initial_lambda = std::numeric_limits<double>::quiet_NaN();
};

struct TraceRatioResult {
  MatrixXd u;                          ///< dim x d, orthonormal columns
  double ratio = 0.0;                  ///< trace(U^T S_w U) / trace(U^T S_wp U), unregularized
  std::vector<double> lambda_history;  ///< regularized ratios, starting from tr(S_w)/tr(S_wp)
  int iterations = 0;
};

/// Minimizes trace(U^T S_w U) / trace(U^T S_wp U) over orthonormal U with d
/// columns by repeatedly taking the d smallest eigenvectors of S_w - lambda S_wp.
TraceRatioResult optimize_u(const MatrixXd& s_w, const MatrixXd& s_wp, Index d, const TraceRatioOptions& opt = {});

struct BetaResult {
  VectorXd beta;            ///< nonnegative, beta^T S_wp beta = 1
  double objective = 0.0;   ///< beta^T S_w beta
  double lower_bound = 0.0; ///< relaxation optimum, rescaled to the input units
  VectorXd relaxed_beta;    ///< rank-1 rounding of the relaxed solution, before refinement
};

/// Solves min beta^T S_w beta s.t. beta^T S_wp beta = 1, beta >= 0 via a
/// log-barrier SDP relaxation (B >= beta beta^T, B >= 0 entrywise), rank-1
/// rounding of B, then projected-gradient refinement on the exact problem.
BetaResult optimize_beta_full(const MatrixXd& s_w_u, const MatrixXd& s_wp_u);

inline VectorXd optimize_beta(const MatrixXd& s_w_u, const MatrixXd& s_wp_u) {
  return optimize_beta_full(s_w_u, s_wp_u).beta;
}

struct EmbeddingOptions {
  Index d = 10;
  int max_rounds = 50;
  double beta_tol = 1e-6;
  /// Multistart runs every start for this many rounds and continues only the
  /// best one; 0 runs every start to max_rounds.
  int screen_rounds = 3;
  TraceRatioOptions trace_ratio;
};

struct EmbeddingState {
  MatrixXd u;
  VectorXd beta;
  Index d = 0;
  std::vector<double> objective_history;  ///< beta^T S_W^U beta after each round
  int rounds = 0;
  bool converged = false;
};

EmbeddingState alternate_u_beta(const KernelSliceStack& slices, const AffinityGraphs& graphs,
                                const VectorXd& init_beta, const EmbeddingOptions& opt);

/// Runs the alternation from init_beta and from every single-kernel weight
/// vector. Starts are ranked by their objective after screen_rounds rounds
/// (earliest on ties) and the winner is run to completion.
EmbeddingState alternate_multistart(const KernelSliceStack& slices, const AffinityGraphs& graphs,
                                    const VectorXd& init_beta, const EmbeddingOptions& opt);

}  // namespace mksr
