#include <gtest/gtest.h>

#include <random>

#include "mksr/kernel.hpp"

using namespace mksr;

namespace {

MatrixXd random_psd(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd b(n, n + 2);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
  return b * b.transpose();
}

MatrixXd points_distances() {
  const double p[5][2] = {{0, 0}, {1, 0}, {0, 2}, {3, 1}, {1, 1}};
  MatrixXd d(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double dx = p[i][0] - p[j][0], dy = p[i][1] - p[j][1];
      d(i, j) = dx * dx + dy * dy;
    }
  return d;
}

}  // namespace

TEST(KernelFromDistances, ZeroDistancesWithExplicitGammaGiveAllOnes) {
  const MatrixXd d = MatrixXd::Zero(3, 3);
  const auto k = kernel_from_distances(d, GammaPolicy::explicit_value(0.7));
  EXPECT_EQ(k.values, MatrixXd::Ones(3, 3));
}

TEST(KernelFromDistances, ZeroDistancesUnderMeanInverseThrow) {
  const MatrixXd d = MatrixXd::Zero(3, 3);
  try {
    kernel_from_distances(d, GammaPolicy::mean_inverse());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllZeroDistances);
  }
}

TEST(KernelFromDistances, MatchesFrozenValues) {
  const auto k = kernel_from_distances(points_distances(), GammaPolicy::mean_inverse(), "pts");
  EXPECT_NEAR(k.gamma, 0.22727272727272727, 1e-16);
  const double expected[25] = {1, 0.79670346989346164, 0.40289032152913301, 0.1030308034617642, 0.63473641894028188,
                               0.79670346989346164, 1, 0.32098411714875269, 0.32098411714875269, 0.79670346989346164,
                               0.40289032152913301, 0.32098411714875269, 1, 0.1030308034617642, 0.63473641894028188,
                               0.1030308034617642, 0.32098411714875269, 0.1030308034617642, 1, 0.40289032152913301,
                               0.63473641894028188, 0.79670346989346164, 0.63473641894028188, 0.40289032152913301, 1};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(k.values(i, j), expected[i * 5 + j], 1e-14);
  EXPECT_EQ(k.source_id, "pts");
}

TEST(KernelFromDistances, RandomDistancesMatchScalarLoop) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  MatrixXd d = MatrixXd::Zero(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) d(i, j) = d(j, i) = u(rng);
  const auto k = kernel_from_distances(d, GammaPolicy::mean_inverse());
  double total = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (i != j) total += d(i, j);
  const double gamma = 20.0 / total;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(k.values(i, j), std::exp(-gamma * d(i, j)), 1e-14);
}

TEST(KernelFromDistances, RejectsAsymmetricAndNonFinite) {
  MatrixXd d = points_distances();
  d(0, 1) += 1e-6;
  EXPECT_THROW(kernel_from_distances(d, GammaPolicy::mean_inverse()), Error);
  d = points_distances();
  d(2, 3) = d(3, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    kernel_from_distances(d, GammaPolicy::mean_inverse());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
  }
}

TEST(ValidateKernel, IdentityPasses) {
  const auto rep = validate_kernel(MatrixXd::Identity(4, 4));
  EXPECT_TRUE(rep.pass());
  EXPECT_DOUBLE_EQ(rep.min_eigenvalue, 1.0);
}

TEST(ValidateKernel, IndefiniteFails) {
  MatrixXd k(2, 2);
  k << 1, 2, 2, 1;
  const auto rep = validate_kernel(k);
  EXPECT_TRUE(rep.symmetric);
  EXPECT_FALSE(rep.psd);
  EXPECT_NEAR(rep.min_eigenvalue, -1.0, 1e-12);
}

TEST(AdmitKernel, ShiftsTinyNegativeEigenvalue) {
  MatrixXd k = random_psd(5, 3);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
  k -= (es.eigenvalues()(0) + 1e-9 * es.eigenvalues()(4)) * MatrixXd::Identity(5, 5);
  KernelMatrix<double> km{k, 0.0, "near", 1.0};
  const auto admitted = admit_kernel(km);
  EXPECT_GE(validate_kernel(admitted.values, 0.0).min_eigenvalue, -1e-12 * es.eigenvalues()(4));
  KernelMatrix<double> bad{-MatrixXd::Identity(3, 3), 0.0, "bad", 1.0};
  EXPECT_THROW(admit_kernel(bad), Error);
}

TEST(NormalizeKernel, MatchesFrozenValues) {
  MatrixXd p(4, 4);
  p << 5, -1.5, 2, 3, -1.5, 2.25, 2, 0.5, 2, 2, 5, 3, 3, 0.5, 3, 3;
  const auto n = normalize_kernel(KernelMatrix<double>{p, 0.0, "p", 1.0});
  EXPECT_DOUBLE_EQ(n.scale, 3.8125);
  EXPECT_NEAR(n.values(0, 0), 1.3114754098360655, 1e-15);
  EXPECT_NEAR(n.values(1, 2), 0.52459016393442626, 1e-15);
  EXPECT_NEAR(n.values(3, 1), 0.13114754098360656, 1e-15);
}

TEST(NormalizeKernel, RandomPsdHasUnitMeanDiagonal) {
  const auto n = normalize_kernel(KernelMatrix<double>{random_psd(4, 9), 0.0, "r", 1.0});
  EXPECT_NEAR(n.values.diagonal().mean(), 1.0, 1e-12);
}

TEST(NormalizeKernel, ZeroMatrixThrows) {
  EXPECT_THROW(normalize_kernel(KernelMatrix<double>{MatrixXd::Zero(3, 3), 0.0, "z", 1.0}), Error);
}

TEST(Ensemble, WeightedSumOfTwoKernels) {
  KernelSet<double> ks;
  MatrixXd k1(2, 2), k2(2, 2);
  k1 << 2, 1, 1, 3;
  k2 << 1, -0.5, -0.5, 2;
  ks.kernels = {{k1, 0.0, "a", 1.0}, {k2, 0.0, "b", 1.0}};
  const auto e = ensemble(ks, VectorXd(Eigen::Vector2d(0.3, 0.7)));
  EXPECT_NEAR(e.values(0, 0), 1.3, 1e-15);
  EXPECT_NEAR(e.values(0, 1), -0.05, 1e-15);
  EXPECT_NEAR(e.values(1, 1), 2.3, 1e-15);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(e.values(i, j), 0.3 * k1(i, j) + 0.7 * k2(i, j), 1e-15);
}

TEST(Ensemble, UnitWeightOnSingleKernelIsIdentityMap) {
  KernelSet<double> ks;
  const MatrixXd k = random_psd(4, 1);
  ks.kernels = {{k, 0.0, "a", 1.0}};
  EXPECT_EQ(ensemble(ks, VectorXd(VectorXd::Ones(1))).values, k);
}

TEST(Ensemble, NegativeOrMislengthWeightsThrow) {
  KernelSet<double> ks;
  ks.kernels = {{random_psd(3, 1), 0.0, "a", 1.0}, {random_psd(3, 2), 0.0, "b", 1.0}};
  try {
    ensemble(ks, VectorXd(Eigen::Vector2d(-0.1, 1.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeWeight);
  }
  EXPECT_THROW(ensemble(ks, VectorXd(VectorXd::Ones(3))), Error);
}

TEST(CrossEnsemble, MatchesFrozenValues) {
  MatrixXd r1(2, 3), r2(2, 3);
  r1 << 0.1, 0.5, 0.9, 0.3, 0.2, 0.7;
  r2 << 1, 0, 0.5, 0.25, 0.75, 0.4;
  const MatrixXd c = cross_ensemble<double>({r1, r2}, VectorXd(Eigen::Vector2d(0.2, 0.8)));
  const double expected[6] = {0.82, 0.1, 0.58, 0.26, 0.64, 0.46};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(c(i, j), expected[i * 3 + j], 1e-15);
}

TEST(Fingerprint, SensitiveToValuesAndShape) {
  const MatrixXd a = random_psd(3, 4);
  MatrixXd b = a;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b(1, 1) = std::nextafter(b(1, 1), 1e9);
  EXPECT_NE(fingerprint(a), fingerprint(b));
  EXPECT_NE(fingerprint(MatrixXd::Zero(2, 3)), fingerprint(MatrixXd::Zero(3, 2)));
}
