#pragma once

// Outer training loops: discriminative (supervised) and LPP-style
// (unsupervised) multiple-kernel dictionary learning.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mksr/embedding.hpp"
#include "mksr/kernel.hpp"
#include "mksr/kmld.hpp"

namespace mksr {

enum class TrainingMode { Supervised, Unsupervised };

struct TrainingConfig {
  TrainingMode mode = TrainingMode::Supervised;
  Index s_levels = 4;
  std::vector<Index> k_atoms{8};
  Index d = 10;
  Index tau = 5;
  Index tau_prime = 10;
  int inner_iters = 10;          ///< power steps per K-hyperline pass
  int khypl_max_outer = 100;
  int outer_rounds_max = 5;
  double outer_beta_tol = 1e-4;
  int alternation_rounds = 50;
  double alternation_tol = 1e-6;
  /// Also start the weight alternation from every single-kernel vertex.
  bool weight_multistart = true;
  /// Rounds each start gets before only the best one continues; 0 runs all in full.
  int weight_screen_rounds = 3;
  std::uint64_t seed = 0;

  /// S=8, K=16, tau=8, tau'=20, d=100.
  static TrainingConfig oxford();
  void validate() const;
  KmldOptions kmld_options(std::uint64_t seed) const;
};

struct RoundLog {
  int round = 0;
  VectorXd beta;
  double trace_ratio = 0.0;
  double mean_energy = 0.0;
};

struct TrainedModel {
  TrainingConfig config;
  VectorXd beta;
  MultilevelDictionary<double> mld;
  MatrixXd codes;  ///< code_length x N
  MatrixXd kyy;    ///< ensemble Gram matrix the dictionary was trained on
  std::vector<double> gammas;
  std::vector<double> scales;
  std::vector<std::string> source_ids;
  AffinityGraphs graphs;
  std::vector<RoundLog> history;
  bool converged = false;
  std::vector<std::string> warnings;

  Index n() const { return kyy.rows(); }
};

/// Combines per-kernel cross rows (each M x N) with the model weights and
/// encodes them; returns code_length x M.
MatrixXd encode_cross(const TrainedModel& m, const std::vector<MatrixXd>& cross_rows);

/// Self-similarity sum_r beta_r k_r(x, x) for test samples whose base kernels
/// have the given per-kernel diagonals (each length M).
VectorXd cross_self_similarity(const TrainedModel& m, const std::vector<VectorXd>& diagonals);

TrainedModel train_supervised(const KernelSet<double>& ks, std::span<const int> labels, const TrainingConfig& cfg);
TrainedModel train_unsupervised(const KernelSet<double>& ks, const TrainingConfig& cfg);

/// Code-correlation graphs: the tau (tau') largest |a_i^T a_j| per row among
/// same-class (different-class) pairs, symmetrized by max.
AffinityGraphs update_affinities_from_codes(const MatrixXd& codes, std::span<const int> labels, Index tau,
                                            Index tau_prime);

/// |A^T A| keeping the tau largest off-diagonal entries per row, symmetrized by max.
MatrixXd final_code_graph(const MatrixXd& codes, Index tau);

/// One line per round: round, beta, trace ratio, mean reconstruction energy.
std::string format_round_log(const std::vector<RoundLog>& history);

}  // namespace mksr
