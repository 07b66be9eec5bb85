#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mksr/eval.hpp"

using namespace mksr;

namespace {

MatrixXd ridge_codes() {
  MatrixXd x(4, 9);
  x << 1, 0.9, 1.1, 0, 0.1, 0, 0, 0.2, 0,
       0, 0.1, 0, 1, 0.8, 1.2, 0, 0, 0.1,
       0.2, 0, 0, 0, 0.1, 0, 1, 1.1, 0.9,
       0.5, 0.4, 0.6, 0.5, 0.5, 0.4, 0.5, 0.6, 0.4;
  return x;
}

const std::vector<int> kRidgeLabels = {0, 0, 0, 1, 1, 1, 2, 2, 2};

MatrixXd blobs(std::uint64_t seed, std::vector<int>& truth) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  const double centres[3][2] = {{0, 0}, {5, 0}, {0, 5}};
  MatrixXd p(30, 2);
  truth.clear();
  for (int i = 0; i < 30; ++i) {
    const int c = (i * 7) % 3;
    p(i, 0) = centres[c][0] + nd(rng);
    p(i, 1) = centres[c][1] + nd(rng);
    truth.push_back(c);
  }
  return p;
}

}  // namespace

TEST(LinearClassifier, MatchesFrozenRidgeSolution) {
  const auto clf = train_linear_classifier(ridge_codes(), kRidgeLabels, 0.1);
  const double w[12] = {1.3485751020846273,   -0.6430334371551063, -0.69837335548192947, -0.43193868661821538,
                        -0.62974690743127237, 1.2933331847805729,  -0.62555640559732539, 0.57409875125071108,
                        -0.71882819465335612, -0.65029974762546849, 1.3239297610792533, -0.14216006463249509};
  const double b[3] = {-0.13193650486360153, -0.61357775153406546, -0.25448574360233145};
  ASSERT_EQ(clf.classes(), 3);
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(clf.weights(c, j), w[c * 4 + j], 1e-12);
    EXPECT_NEAR(clf.bias(c), b[c], 1e-12);
  }
  EXPECT_EQ(clf.predict(ridge_codes()), kRidgeLabels);
}

TEST(LinearClassifier, TinyRidgeIsSingular) {
  try {
    train_linear_classifier(ridge_codes(), kRidgeLabels, 1e-10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularSystem);
  }
}

TEST(LinearClassifier, LabelCountMismatchThrows) {
  const std::vector<int> short_labels = {0, 1};
  EXPECT_THROW(train_linear_classifier(ridge_codes(), short_labels, 0.1), Error);
}

TEST(Metrics, FrozenNmiAndAccuracy) {
  const std::vector<int> pred = {0, 0, 1, 1, 1, 1}, truth = {0, 0, 0, 1, 1, 1};
  EXPECT_NEAR(normalized_mutual_information(pred, truth), 0.47913876749186385, 1e-14);
  const auto rep = score(pred, truth, Task::Cluster);
  EXPECT_NEAR(rep.accuracy, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(rep.confusion(0, 0), 2);
  EXPECT_EQ(rep.confusion(0, 1), 1);
  EXPECT_EQ(rep.confusion(1, 1), 3);
}

TEST(Metrics, NmiEdgeCases) {
  const std::vector<int> one = {0, 0, 0}, two = {0, 1, 0};
  EXPECT_EQ(normalized_mutual_information(one, one), 1.0);
  EXPECT_EQ(normalized_mutual_information(one, two), 0.0);
  EXPECT_NEAR(normalized_mutual_information(two, two), 1.0, 1e-15);
}

TEST(Metrics, ClusteringAccuracyIgnoresLabelNames) {
  const std::vector<int> pred = {2, 2, 0, 0, 1, 1}, truth = {0, 0, 1, 1, 2, 2};
  const auto rep = score(pred, truth, Task::Cluster);
  EXPECT_EQ(rep.accuracy, 1.0);
  EXPECT_NEAR(rep.nmi, 1.0, 1e-15);
  EXPECT_NEAR(score(pred, truth, Task::Classify).accuracy, 0.0, 0.0);
}

TEST(Metrics, ReportsAreParseable) {
  const std::vector<int> pred = {0, 1, 1}, truth = {0, 1, 0};
  const auto rep = score(pred, truth, Task::Classify);
  EXPECT_NE(rep.to_key_value().find("accuracy"), std::string::npos);
  EXPECT_NE(rep.to_csv().find(','), std::string::npos);
}

TEST(MaxWeightAssignment, AgreesWithBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd w(4, 4);
    for (Index i = 0; i < 16; ++i) w.data()[i] = std::floor(u(rng));
    std::vector<Index> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1;
    do {
      double s = 0;
      for (Index i = 0; i < 4; ++i) s += w(i, perm[static_cast<std::size_t>(i)]);
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto got = max_weight_assignment(w);
    double s = 0;
    for (Index i = 0; i < 4; ++i) s += w(i, got[static_cast<std::size_t>(i)]);
    EXPECT_EQ(s, best);
  }
}

TEST(KMeans, RecoversSeparatedBlobsDeterministically) {
  std::vector<int> truth;
  const MatrixXd p = blobs(1, truth);
  const auto a = kmeans(p, 3, 5);
  const auto b = kmeans(p, 3, 5);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.labels.front(), 0);
  EXPECT_EQ(score(a.labels, truth, Task::Cluster).accuracy, 1.0);
}

TEST(KMeans, RowPermutationPermutesPartition) {
  std::vector<int> truth;
  const MatrixXd p = blobs(2, truth);
  std::vector<Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  MatrixXd q(30, 2);
  for (Index i = 0; i < 30; ++i) q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  const auto a = kmeans(p, 3, 0), b = kmeans(q, 3, 0);
  std::vector<int> back(30);
  for (Index i = 0; i < 30; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = b.labels[static_cast<std::size_t>(i)];
  EXPECT_EQ(score(back, a.labels, Task::Cluster).accuracy, 1.0);
  EXPECT_NEAR(a.inertia, b.inertia, 1e-9);
}

TEST(KMeans, RejectsBadClusterCount) {
  EXPECT_THROW(kmeans(MatrixXd::Zero(2, 2), 3, 0), Error);
}

TEST(SpectralCluster, BlockDiagonalGraph) {
  MatrixXd w = MatrixXd::Zero(9, 9);
  for (Index b = 0; b < 3; ++b)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j)
        if (i != j) w(3 * b + i, 3 * b + j) = 1.0;
  const auto labels = spectral_cluster(w, 3, 0);
  const std::vector<int> truth = {0, 0, 0, 1, 1, 1, 2, 2, 2};
  EXPECT_EQ(score(labels, truth, Task::Cluster).accuracy, 1.0);
}

TEST(SpectralCluster, IsolatedVertexStillGetsALabel) {
  MatrixXd w = MatrixXd::Zero(7, 7);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j)
      if (i != j) w(i, j) = w(3 + i, 3 + j) = 1.0;
  const auto labels = spectral_cluster(w, 2, 0);
  ASSERT_EQ(labels.size(), 7u);
  EXPECT_NE(labels[0], labels[3]);
  EXPECT_GE(labels[6], 0);
  EXPECT_LT(labels[6], 2);
}

TEST(SpectralCluster, EmptyGraphIsDegenerate) {
  try {
    spectral_cluster(MatrixXd::Zero(4, 4), 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DisconnectedDegenerate);
  }
}
