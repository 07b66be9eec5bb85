#include "mksr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mksr/errors.hpp"
#include "mksr/k2hypl.hpp"

namespace mksr {

namespace {

double squared_distance(const MatrixXd& a, Index i, const MatrixXd& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

bool lexicographically_less(const MatrixXd& a, const MatrixXd& b) {
  for (Index i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return a.data()[i] < b.data()[i];
  return false;
}

KMeansResult lloyd(const MatrixXd& x, Index k, std::mt19937_64& rng, int max_iter) {
  const Index n = x.rows();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Index>(unit(rng) * static_cast<double>(n)) % n);
  VectorXd nearest = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (Index j = 1; j < k; ++j) {
    for (Index i = 0; i < n; ++i) nearest(i) = std::min(nearest(i), squared_distance(x, i, c, j - 1));
    const double total = nearest.sum();
    Index pick = n - 1;
    if (total > 0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(unit(rng) * static_cast<double>(n)) % n;
    }
    c.row(j) = x.row(pick);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  VectorXd dist(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = squared_distance(x, i, c, 0);
      for (Index j = 1; j < k; ++j) {
        const double dj = squared_distance(x, i, c, j);
        if (dj < bd) {
          bd = dj;
          best = static_cast<int>(j);
        }
      }
      dist(i) = bd;
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    MatrixXd sum = MatrixXd::Zero(k, x.cols());
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sum.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (Index j = 0; j < k; ++j) {
      if (count[static_cast<std::size_t>(j)] > 0) {
        c.row(j) = sum.row(j) / static_cast<double>(count[static_cast<std::size_t>(j)]);
      } else {
        // Empty cluster: move it onto the point farthest from its centre.
        Index far = 0;
        dist.maxCoeff(&far);
        c.row(j) = x.row(far);
        dist(far) = 0.0;
      }
    }
  }
  KMeansResult r;
  r.labels = std::move(labels);
  r.centroids = std::move(c);
  r.inertia = 0.0;
  for (Index i = 0; i < n; ++i) r.inertia += squared_distance(x, i, r.centroids, r.labels[static_cast<std::size_t>(i)]);
  return r;
}

std::vector<int> first_appearance_order(const std::vector<int>& labels, MatrixXd* centroids) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (static_cast<std::size_t>(l) >= map.size()) map.resize(static_cast<std::size_t>(l) + 1, -1);
    if (map[static_cast<std::size_t>(l)] < 0)
      map[static_cast<std::size_t>(l)] = static_cast<int>(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
    out[i] = map[static_cast<std::size_t>(l)];
  }
  if (centroids) {
    MatrixXd c = *centroids;
    int next = static_cast<int>(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
    map.resize(static_cast<std::size_t>(c.rows()), -1);
    for (auto& m : map)
      if (m < 0) m = next++;
    for (Index j = 0; j < c.rows(); ++j) centroids->row(map[static_cast<std::size_t>(j)]) = c.row(j);
  }
  return out;
}

int class_count(std::span<const int> labels) {
  int c = 0;
  for (int l : labels) {
    if (l < 0) throw Error(ErrorCode::InvalidArgument, "labels must be nonnegative");
    c = std::max(c, l + 1);
  }
  return c;
}

}  // namespace

KMeansResult kmeans(const MatrixXd& points, Index k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1 || k > points.rows()) throw Error(ErrorCode::InvalidArgument, "cluster count out of range");
  if (!points.allFinite()) throw Error(ErrorCode::NonFiniteInput, "points have non-finite entries");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansResult cur = lloyd(points, k, rng, max_iter);
    cur.labels = first_appearance_order(cur.labels, &cur.centroids);
    if (cur.inertia < best.inertia ||
        (cur.inertia == best.inertia && lexicographically_less(cur.centroids, best.centroids)))
      best = std::move(cur);
  }
  return best;
}

std::vector<int> spectral_cluster(const MatrixXd& w, Index k, std::uint64_t seed) {
  const Index n = w.rows();
  if (w.cols() != n) throw Error(ErrorCode::DimensionMismatch, "affinity matrix is not square");
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "cluster count out of range");
  if (!w.allFinite()) throw Error(ErrorCode::NonFiniteInput, "affinity matrix has non-finite entries");
  if (n > 0 && w.minCoeff() < 0) throw Error(ErrorCode::InvalidArgument, "affinities must be nonnegative");
  const double scale = n > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
  if (symmetry_defect(w) > kSymmetryTol * std::max(1.0, scale))
    throw Error(ErrorCode::AsymmetricInput, "affinity matrix is not symmetric");

  MatrixXd a = (w + w.transpose()) / 2.0;
  a.diagonal().setZero();
  const VectorXd deg = a.rowwise().sum();
  std::vector<Index> live, isolated;
  for (Index i = 0; i < n; ++i) (deg(i) > 0 ? live : isolated).push_back(i);
  if (live.empty()) throw Error(ErrorCode::DisconnectedDegenerate, "every vertex is isolated");
  if (static_cast<Index>(live.size()) < k)
    throw Error(ErrorCode::DisconnectedDegenerate, "fewer connected vertices than clusters");

  const Index m = static_cast<Index>(live.size());
  MatrixXd norm_a(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      norm_a(i, j) = a(live[i], live[j]) / std::sqrt(deg(live[i]) * deg(live[j]));
  // The k smallest eigenvalues of I - D^-1/2 W D^-1/2 are the k largest of the normalized affinity.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(norm_a);
  MatrixXd emb = es.eigenvectors().rightCols(k).rowwise().reverse();
  for (Index j = 0; j < k; ++j) {
    Index arg = 0;
    emb.col(j).cwiseAbs().maxCoeff(&arg);
    if (emb(arg, j) < 0) emb.col(j) = -emb.col(j);
  }
  for (Index i = 0; i < m; ++i) {
    const double nrm = emb.row(i).norm();
    if (nrm > 0) emb.row(i) /= nrm;
  }
  const KMeansResult km = kmeans(emb, k, seed);

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < m; ++i) labels[static_cast<std::size_t>(live[i])] = km.labels[static_cast<std::size_t>(i)];
  if (!isolated.empty()) {
    // An isolated vertex embeds at the origin; it joins the nearest centroid.
    Index nearest = 0;
    km.centroids.rowwise().squaredNorm().minCoeff(&nearest);
    for (Index i : isolated) labels[static_cast<std::size_t>(i)] = static_cast<int>(nearest);
  }
  return labels;
}

MatrixXd LinearClassifier::scores(const MatrixXd& codes) const {
  if (codes.rows() != weights.cols()) throw Error(ErrorCode::DimensionMismatch, "code length does not match the classifier");
  return (weights * codes).colwise() + bias;
}

std::vector<int> LinearClassifier::predict(const MatrixXd& codes) const {
  const MatrixXd s = scores(codes);
  std::vector<int> out(static_cast<std::size_t>(codes.cols()));
  for (Index j = 0; j < s.cols(); ++j) {
    Index best = 0;
    for (Index c = 1; c < s.rows(); ++c)
      if (s(c, j) > s(best, j)) best = c;
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

LinearClassifier train_linear_classifier(const MatrixXd& codes, std::span<const int> labels, double ridge) {
  const Index n = codes.cols();
  if (static_cast<Index>(labels.size()) != n) throw Error(ErrorCode::LengthMismatch, "label count does not match codes");
  if (!(ridge >= 1e-8)) throw Error(ErrorCode::SingularSystem, "ridge must be at least 1e-8");
  if (!codes.allFinite()) throw Error(ErrorCode::NonFiniteInput, "codes have non-finite entries");
  const int c = class_count(labels);
  if (c < 2) throw Error(ErrorCode::ClassTooSmall, "at least two classes are required");

  MatrixXd t = MatrixXd::Constant(c, n, -1.0);
  for (Index j = 0; j < n; ++j) t(labels[static_cast<std::size_t>(j)], j) = 1.0;
  const VectorXd mu = codes.rowwise().mean();
  const VectorXd t_mean = t.rowwise().mean();
  const MatrixXd xc = codes.colwise() - mu;
  const MatrixXd tc = t.colwise() - t_mean;

  MatrixXd gram = xc * xc.transpose();
  gram.diagonal().array() += ridge;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::SingularSystem, "normal equations are singular");
  LinearClassifier clf;
  clf.weights = ldlt.solve(xc * tc.transpose()).transpose();
  if (!clf.weights.allFinite()) throw Error(ErrorCode::SingularSystem, "normal equations are singular");
  clf.bias = t_mean - clf.weights * mu;
  return clf;
}

std::vector<Index> max_weight_assignment(const MatrixXd& weight) {
  const Index n = weight.rows();
  if (weight.cols() != n) throw Error(ErrorCode::DimensionMismatch, "assignment matrix is not square");
  if (n == 0) return {};
  const double top = weight.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Index> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  auto cost = [&](Index i, Index j) { return top - weight(i - 1, j - 1); };
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> row_to_col(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "labelings have different lengths");
  if (a.empty()) throw Error(ErrorCode::InvalidArgument, "empty labeling");
  const int ca = class_count(a), cb = class_count(b);
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(ca, cb);
  for (std::size_t i = 0; i < a.size(); ++i) joint(a[i], b[i]) += 1.0;
  const double total = static_cast<double>(a.size());
  const VectorXd pa = joint.rowwise().sum() / total;
  const VectorXd pb = joint.colwise().sum().transpose() / total;
  auto entropy = [](const VectorXd& p) {
    std::vector<double> terms;
    for (Index i = 0; i < p.size(); ++i)
      if (p(i) > 0) terms.push_back(-p(i) * std::log(p(i)));
    std::sort(terms.begin(), terms.end());
    return std::accumulate(terms.begin(), terms.end(), 0.0);
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  std::vector<double> terms;
  for (Index i = 0; i < ca; ++i)
    for (Index j = 0; j < cb; ++j) {
      const double pij = joint(i, j) / total;
      if (pij > 0) terms.push_back(pij * std::log(pij / (pa(i) * pb(j))));
    }
  std::sort(terms.begin(), terms.end());
  const double mi = std::accumulate(terms.begin(), terms.end(), 0.0);
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

MetricReport score(std::span<const int> predicted, std::span<const int> truth, Task task) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
  if (truth.empty()) throw Error(ErrorCode::InvalidArgument, "empty labeling");
  MetricReport rep;
  rep.task = task;
  const int c = std::max(class_count(predicted), class_count(truth));
  rep.confusion = Eigen::MatrixXi::Zero(c, c);
  for (std::size_t i = 0; i < truth.size(); ++i) ++rep.confusion(truth[i], predicted[i]);
  const double total = static_cast<double>(truth.size());

  Eigen::MatrixXi matched = rep.confusion;
  if (task == Task::Cluster) {
    const std::vector<Index> map = max_weight_assignment(rep.confusion.cast<double>().transpose());
    // map[predicted] = truth; reorder prediction columns onto their matched truth ids.
    for (Index p = 0; p < c; ++p) matched.col(map[static_cast<std::size_t>(p)]) = rep.confusion.col(p);
  }
  rep.accuracy = static_cast<double>(matched.trace()) / total;
  double per_class = 0.0;
  int present = 0;
  for (Index t = 0; t < c; ++t) {
    const int row = matched.row(t).sum();
    if (row == 0) continue;
    per_class += static_cast<double>(matched(t, t)) / row;
    ++present;
  }
  rep.per_class_accuracy = per_class / present;
  rep.nmi = normalized_mutual_information(predicted, truth);
  return rep;
}

std::string MetricReport::to_key_value() const {
  char buf[128];
  std::ostringstream out;
  out << "task: " << (task == Task::Classify ? "classify" : "cluster") << "\n";
  std::snprintf(buf, sizeof buf, "accuracy: %.6f\n", accuracy);
  out << buf;
  std::snprintf(buf, sizeof buf, "per_class_accuracy: %.6f\n", per_class_accuracy);
  out << buf;
  std::snprintf(buf, sizeof buf, "nmi: %.6f\n", nmi);
  out << buf;
  out << "confusion:";
  for (Index i = 0; i < confusion.rows(); ++i) {
    out << (i ? " |" : "");
    for (Index j = 0; j < confusion.cols(); ++j) out << " " << confusion(i, j);
  }
  out << "\n";
  return out.str();
}

std::string MetricReport::to_csv() const {
  char buf[128];
  std::ostringstream out;
  out << "metric,value\n";
  std::snprintf(buf, sizeof buf, "accuracy,%.17g\nper_class_accuracy,%.17g\nnmi,%.17g\n", accuracy,
                per_class_accuracy, nmi);
  out << buf;
  return out.str();
}

}  // namespace mksr
