#include <gtest/gtest.h>

#include <random>

#include "mksr/embedding.hpp"
#include "mksr/synth.hpp"

using namespace mksr;

namespace {

KernelSet<double> set_of(std::initializer_list<MatrixXd> ks) {
  KernelSet<double> out;
  int r = 0;
  for (const auto& k : ks) out.kernels.push_back({k, 0.0, "k" + std::to_string(r++), 1.0});
  return out;
}

KernelSliceStack two_sample_slices() {
  MatrixXd s0(2, 2), s1(2, 2);
  s0 << 0.9, 0.2, 0.1, 0.4;
  s1 << 0.3, 0.8, 0.6, 0.5;
  KernelSliceStack st;
  st.slices = {s0, s1};
  return st;
}

MatrixXd psd2(double a, double b, double c) {
  MatrixXd m(2, 2);
  m << a, b, b, c;
  return m;
}

}  // namespace

TEST(InitAffinities, HandCheckedNeighbours) {
  MatrixXd k(4, 4);
  k << 1, .5, .4, .2, .5, 1, .3, .6, .4, .3, 1, .1, .2, .6, .1, 1;
  const int labels[] = {0, 0, 1, 1};
  const auto g = init_affinities(set_of({k}), labels, 1, 1);
  MatrixXd w = MatrixXd::Zero(4, 4), wp = MatrixXd::Zero(4, 4);
  w(0, 1) = w(1, 0) = w(2, 3) = w(3, 2) = 1;
  wp(0, 2) = wp(2, 0) = wp(1, 3) = wp(3, 1) = 1;
  EXPECT_EQ(g.w, w);
  EXPECT_EQ(g.w_prime, wp);
  EXPECT_EQ(g.penalty_form(), ScatterForm::Pairwise);
}

TEST(InitAffinities, SingletonClassIsRejected) {
  const int labels[] = {0, 0, 1};
  try {
    init_affinities(set_of({MatrixXd::Identity(3, 3)}), labels, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClassTooSmall);
  }
}

TEST(InitAffinities, UnsupervisedRingGraph) {
  // Ring similarity: each vertex's nearest neighbours are its two ring neighbours.
  const Index n = 6;
  MatrixXd k = MatrixXd::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, (i + 1) % n) = k((i + 1) % n, i) = 0.5;
  }
  const auto g = init_affinities_unsupervised(set_of({k}), 2);
  for (Index i = 0; i < n; ++i) {
    EXPECT_EQ(g.w(i, (i + 1) % n), 1.0);
    EXPECT_EQ(g.w.row(i).sum(), 2.0);
  }
  EXPECT_EQ(g.w_prime, MatrixXd(VectorXd::Constant(n, 2.0).asDiagonal()));
  EXPECT_EQ(g.penalty_form(), ScatterForm::Diagonal);
}

TEST(GraphOperator, LaplacianOfSymmetricGraph) {
  MatrixXd w(3, 3);
  w << 0, 1, 2, 1, 0, 0, 2, 0, 0;
  MatrixXd expected(3, 3);
  expected << 6, -2, -4, -2, 2, 0, -4, 0, 4;
  EXPECT_EQ(graph_operator(w, ScatterForm::Pairwise), expected);
  EXPECT_EQ(graph_operator(w, ScatterForm::Diagonal), MatrixXd::Zero(3, 3));
}

TEST(Scatter, MatchesFrozenTwoSampleValues) {
  const auto st = two_sample_slices();
  MatrixXd w = MatrixXd::Zero(2, 2);
  w(0, 1) = 1;
  const MatrixXd sb = scatter_beta(st, Eigen::Vector2d(0.4, 0.6), w);
  EXPECT_NEAR(sb(0, 0), 0.0144, 1e-15);
  EXPECT_NEAR(sb(0, 1), 0.0312, 1e-15);
  EXPECT_NEAR(sb(1, 1), 0.0676, 1e-15);
  const MatrixXd su = scatter_u(st, Eigen::Vector2d(0.6, 0.8), w);
  EXPECT_NEAR(su(0, 0), 0.0016, 1e-15);
  EXPECT_NEAR(su(0, 1), 0.0176, 1e-15);
  EXPECT_NEAR(su(1, 1), 0.1936, 1e-15);
}

TEST(Scatter, BothFormsAgreeOnTheJointObjective) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const Index n = 7, r = 3;
  KernelSet<double> ks;
  for (Index q = 0; q < r; ++q) {
    MatrixXd b(n, n);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
    ks.kernels.push_back({b * b.transpose(), 0.0, "", 1.0});
  }
  MatrixXd w = MatrixXd::Zero(n, n), u(n, 2);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) w(i, j) = w(j, i) = std::abs(nd(rng));
  for (Index i = 0; i < u.size(); ++i) u.data()[i] = nd(rng);
  const VectorXd beta = Eigen::Vector3d(0.2, 1.1, 0.5);
  const auto st = build_slices(ks);
  const double via_beta = (u.transpose() * scatter_beta(st, beta, w) * u).trace();
  const double via_u = beta.dot(scatter_u(st, u, w) * beta);
  double direct = 0;
  const MatrixXd kb = ensemble(ks, beta).values;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) direct += w(i, j) * (u.transpose() * (kb.col(i) - kb.col(j))).squaredNorm();
  EXPECT_NEAR(via_beta, direct, 1e-9 * direct);
  EXPECT_NEAR(via_u, direct, 1e-9 * direct);
}

TEST(OptimizeU, MatchesFrozenMinimum) {
  const auto res = optimize_u(psd2(2, 0.5, 1), psd2(1, 0.2, 3), 1);
  EXPECT_NEAR(res.ratio, 0.29531547700573724, 1e-9);
  EXPECT_NEAR(res.u.norm(), 1.0, 1e-12);
  for (std::size_t i = 1; i < res.lambda_history.size(); ++i)
    EXPECT_LE(res.lambda_history[i], res.lambda_history[i - 1] + 1e-15);
}

TEST(OptimizeU, FullDimensionReturnsTraceRatio) {
  const auto res = optimize_u(psd2(2, 0.5, 1), psd2(1, 0.2, 3), 2);
  EXPECT_NEAR(res.ratio, 3.0 / 4.0, 1e-9);
}

TEST(OptimizeU, ZeroDenominatorThrows) {
  try {
    optimize_u(psd2(1, 0, 1), MatrixXd::Zero(2, 2), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularDenominator);
  }
}

TEST(OptimizeBeta, VertexOptimumOnSecondKernel) {
  const auto res = optimize_beta_full(psd2(1, 0.3, 0.5), psd2(0.8, -0.1, 0.6));
  EXPECT_NEAR(res.objective, 0.5 / 0.6, 1e-9);
  EXPECT_NEAR(res.beta(0), 0.0, 1e-9);
  EXPECT_NEAR(res.beta(1), 1.0 / std::sqrt(0.6), 1e-9);
  EXPECT_LE(res.lower_bound, res.objective + 1e-9);
}

TEST(OptimizeBeta, VertexOptimumOnFirstKernel) {
  const auto res = optimize_beta_full(psd2(1, 0.9, 1.2), psd2(1, 0.1, 0.5));
  EXPECT_NEAR(res.objective, 1.0, 1e-9);
  EXPECT_NEAR(res.beta(0), 1.0, 1e-9);
  EXPECT_NEAR(res.beta(1), 0.0, 1e-9);
}

TEST(OptimizeBeta, InteriorOptimum) {
  const auto res = optimize_beta_full(psd2(1.2, -0.2, 0.9), psd2(1, 0.6, 1.5));
  EXPECT_NEAR(res.objective, 0.42318177006317492, 1e-9);
  EXPECT_NEAR(res.beta(0), 0.36644567054326244, 1e-6);
  EXPECT_NEAR(res.beta(1), 0.62713371678765595, 1e-6);
  EXPECT_NEAR(res.beta.dot(psd2(1, 0.6, 1.5) * res.beta), 1.0, 1e-12);
  EXPECT_NEAR(res.lower_bound, res.objective, 1e-6);
}

TEST(OptimizeBeta, SingleKernelIsScaledToUnitDenominator) {
  const VectorXd b = optimize_beta(MatrixXd::Constant(1, 1, 3.0), MatrixXd::Constant(1, 1, 4.0));
  EXPECT_DOUBLE_EQ(b(0), 0.5);
}

TEST(OptimizeBeta, ZeroDenominatorIsInfeasible) {
  try {
    optimize_beta(psd2(1, 0, 1), MatrixXd::Zero(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(OptimizeBeta, ManyKernelsSkipRelaxationButStayFeasible) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  const Index r = 30;
  MatrixXd a(r, r + 2), b(r, r + 2);
  for (Index i = 0; i < a.size(); ++i) {
    a.data()[i] = nd(rng);
    b.data()[i] = nd(rng);
  }
  const MatrixXd sw = a * a.transpose(), swp = b * b.transpose();
  const auto res = optimize_beta_full(sw, swp);
  EXPECT_GE(res.beta.minCoeff(), -1e-12);
  EXPECT_NEAR(res.beta.dot(swp * res.beta), 1.0, 1e-9);
  for (Index q = 0; q < r; ++q) EXPECT_LE(res.objective, sw(q, q) / swp(q, q) + 1e-9);
}

TEST(Alternation, ObjectiveIsMonotoneAndMultistartNoWorse) {
  const auto data = two_kernel_planted(3, 12, 0, 4);
  KernelSet<double> ks;
  for (const auto& d : data.train) ks.kernels.push_back(kernel_from_distances(d, GammaPolicy::mean_inverse()));
  const auto g = init_affinities(ks, data.train_labels, 3, 5);
  const auto slices = build_slices(ks);
  EmbeddingOptions eo;
  eo.d = 5;
  eo.max_rounds = 6;
  const VectorXd init = VectorXd::Constant(2, 0.5);
  const auto single = alternate_u_beta(slices, g, init, eo);
  for (std::size_t i = 1; i < single.objective_history.size(); ++i)
    EXPECT_LE(single.objective_history[i], single.objective_history[i - 1] * (1 + 1e-9));
  EXPECT_EQ(single.u.cols(), 5);
  const auto multi = alternate_multistart(slices, g, init, eo);
  EXPECT_LE(multi.objective_history.back(), single.objective_history.back() * (1 + 1e-12));
  EXPECT_GE(multi.beta.minCoeff(), 0.0);
}
