#include "mksr/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "mksr/errors.hpp"

namespace mksr {

namespace {

/// Indices of the `count` largest values among `candidates` (ties: lower index).
std::vector<Index> top_neighbours(const MatrixXd& k, Index i, const std::vector<Index>& candidates, Index count) {
  std::vector<Index> c = candidates;
  const auto take = std::min<std::size_t>(c.size(), static_cast<std::size_t>(count));
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(take), c.end(), [&](Index a, Index b) {
    if (k(i, a) != k(i, b)) return k(i, a) > k(i, b);
    return a < b;
  });
  c.resize(take);
  return c;
}

MatrixXd symmetrize_max(const MatrixXd& w) { return w.cwiseMax(w.transpose()); }

void check_labels(std::span<const int> labels, Index n) {
  if (static_cast<Index>(labels.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "label count does not match the kernel size");
  for (int l : labels)
    if (l < 0) throw Error(ErrorCode::InvalidArgument, "labels must be nonnegative");
}

MatrixXd symmetric_part(const MatrixXd& m) { return (m + m.transpose()) / 2.0; }

}  // namespace

MatrixXd KernelSliceStack::kernel(Index r) const {
  MatrixXd k(n(), n());
  for (Index i = 0; i < n(); ++i) k.col(i) = slices[static_cast<std::size_t>(i)].col(r);
  return k;
}

MatrixXd KernelSliceStack::combined(const VectorXd& beta) const {
  if (beta.size() != r()) throw Error(ErrorCode::DimensionMismatch, "weight length does not match kernel count");
  MatrixXd v(n(), n());
  for (Index i = 0; i < n(); ++i) v.col(i) = slices[static_cast<std::size_t>(i)] * beta;
  return v;
}

AffinityGraphs init_affinities(const KernelSet<double>& ks, std::span<const int> labels, Index tau,
                               Index tau_prime) {
  check_kernel_set(ks);
  const Index n = ks.n();
  check_labels(labels, n);
  if (tau < 1 || tau_prime < 1) throw Error(ErrorCode::InvalidArgument, "neighbourhood sizes must be at least 1");
  std::vector<Index> class_size(static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1), 0);
  for (int l : labels) ++class_size[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < class_size.size(); ++c)
    if (class_size[c] == 1) throw Error(ErrorCode::ClassTooSmall, "class " + std::to_string(c) + " has one member");

  AffinityGraphs g;
  g.mode = GraphMode::Supervised;
  g.w = MatrixXd::Zero(n, n);
  g.w_prime = MatrixXd::Zero(n, n);
  std::vector<Index> same, diff;
  for (Index r = 0; r < ks.size(); ++r) {
    const MatrixXd& k = ks[r];
    for (Index i = 0; i < n; ++i) {
      same.clear();
      diff.clear();
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)] ? same : diff).push_back(j);
      }
      for (Index j : top_neighbours(k, i, same, tau)) g.w(i, j) += 1.0;
      for (Index j : top_neighbours(k, i, diff, tau_prime)) g.w_prime(i, j) += 1.0;
    }
  }
  const double inv_r = 1.0 / static_cast<double>(ks.size());
  g.w = symmetrize_max(g.w * inv_r);
  g.w_prime = symmetrize_max(g.w_prime * inv_r);
  return g;
}

AffinityGraphs init_affinities_unsupervised(const KernelSet<double>& ks, Index tau) {
  check_kernel_set(ks);
  const Index n = ks.n();
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "neighbourhood size must be at least 1");
  MatrixXd w = MatrixXd::Zero(n, n);
  std::vector<Index> others;
  for (Index r = 0; r < ks.size(); ++r) {
    for (Index i = 0; i < n; ++i) {
      others.clear();
      for (Index j = 0; j < n; ++j)
        if (j != i) others.push_back(j);
      for (Index j : top_neighbours(ks[r], i, others, tau)) w(i, j) += 1.0;
    }
  }
  AffinityGraphs g;
  g.mode = GraphMode::Unsupervised;
  g.w = symmetrize_max(w / static_cast<double>(ks.size()));
  g.w_prime = degree_matrix(g.w);
  return g;
}

MatrixXd degree_matrix(const MatrixXd& w) { return w.rowwise().sum().asDiagonal(); }

KernelSliceStack build_slices(const KernelSet<double>& ks) {
  check_kernel_set(ks);
  const Index n = ks.n();
  KernelSliceStack out;
  out.slices.assign(static_cast<std::size_t>(n), MatrixXd(n, ks.size()));
  for (Index i = 0; i < n; ++i)
    for (Index r = 0; r < ks.size(); ++r) out.slices[static_cast<std::size_t>(i)].col(r) = ks[r].col(i);
  return out;
}

MatrixXd graph_operator(const MatrixXd& graph, ScatterForm form) {
  if (graph.rows() != graph.cols()) throw Error(ErrorCode::DimensionMismatch, "graph is not square");
  if (form == ScatterForm::Diagonal) return graph.diagonal().asDiagonal();
  MatrixXd l = -(graph + graph.transpose());
  l.diagonal() += graph.rowwise().sum() + graph.colwise().sum().transpose();
  return l;
}

MatrixXd scatter_beta(const KernelSliceStack& slices, const VectorXd& beta, const MatrixXd& graph, ScatterForm form) {
  if (graph.rows() != slices.n()) throw Error(ErrorCode::DimensionMismatch, "graph size does not match slices");
  const MatrixXd v = slices.combined(beta);
  return symmetric_part(v * graph_operator(graph, form) * v.transpose());
}

MatrixXd scatter_u(const KernelSliceStack& slices, const MatrixXd& u, const MatrixXd& graph, ScatterForm form) {
  if (graph.rows() != slices.n()) throw Error(ErrorCode::DimensionMismatch, "graph size does not match slices");
  if (u.rows() != slices.n()) throw Error(ErrorCode::DimensionMismatch, "U rows do not match the sample count");
  const Index r = slices.r();
  const MatrixXd l = graph_operator(graph, form);
  // Row i of G_r is (column i of K_r)^T U, so entry (r, q) is trace(G_r^T L G_q).
  std::vector<MatrixXd> g(static_cast<std::size_t>(r)), lg(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) {
    g[static_cast<std::size_t>(k)] = slices.kernel(k).transpose() * u;
    lg[static_cast<std::size_t>(k)] = l * g[static_cast<std::size_t>(k)];
  }
  MatrixXd s(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b)
      s(a, b) = (g[static_cast<std::size_t>(a)].array() * lg[static_cast<std::size_t>(b)].array()).sum();
  return symmetric_part(s);
}

TraceRatioResult optimize_u(const MatrixXd& s_w, const MatrixXd& s_wp, Index d, const TraceRatioOptions& opt) {
  const Index n = s_w.rows();
  if (s_w.cols() != n || s_wp.rows() != n || s_wp.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "scatter matrices must be square and of equal size");
  if (d < 1) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be at least 1");
  d = std::min(d, n);
  const double tr_wp = s_wp.trace();
  if (!(tr_wp > 0) || !std::isfinite(tr_wp))
    throw Error(ErrorCode::SingularDenominator, "penalty scatter has no positive trace");

  // Dividing both matrices by trace(S_wp) leaves every ratio unchanged.
  const MatrixXd sw = s_w / tr_wp;
  MatrixXd swp = s_wp / tr_wp;
  swp.diagonal().array() += opt.ridge / static_cast<double>(n);

  auto trace_of = [](const MatrixXd& s, const MatrixXd& u) { return (u.array() * (s * u).array()).sum(); };

  TraceRatioResult res;
  double lambda = std::isnan(opt.initial_lambda) ? sw.trace() / swp.trace() : opt.initial_lambda;
  res.lambda_history.push_back(lambda);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  for (int it = 0; it < opt.max_iter; ++it) {
    es.compute(sw - lambda * swp);
    MatrixXd u = es.eigenvectors().leftCols(d);
    const double den = trace_of(swp, u);
    if (!(den > 1e-12)) throw Error(ErrorCode::SingularDenominator, "trace(U^T S_wp U) vanished");
    const double next = trace_of(sw, u) / den;
    if (it > 0 && next > lambda) break;  // round-off only; keep the previous basis
    res.u = std::move(u);
    res.iterations = it + 1;
    res.lambda_history.push_back(next);
    const double change = std::abs(next - lambda);
    lambda = next;
    if (change < opt.tol) break;
  }
  const double den = trace_of(s_wp, res.u);
  if (!(den > 1e-12 * tr_wp)) throw Error(ErrorCode::SingularDenominator, "trace(U^T S_wp U) vanished");
  res.ratio = trace_of(s_w, res.u) / den;
  return res;
}

namespace {

double ratio_of(const MatrixXd& a, const MatrixXd& b, const VectorXd& x) {
  const double den = x.dot(b * x);
  if (!(den > 0)) return std::numeric_limits<double>::infinity();
  return x.dot(a * x) / den;
}

/// Projected gradient with Armijo backtracking on the scale-invariant ratio
/// x^T A x / x^T B x over the nonnegative orthant (iterates kept at unit norm).
VectorXd refine_ratio(const MatrixXd& a, const MatrixXd& b, VectorXd x) {
  x /= x.norm();
  double fx = ratio_of(a, b, x);
  double step = 1.0;
  for (int it = 0; it < 5000 && std::isfinite(fx); ++it) {
    const double den = x.dot(b * x);
    const VectorXd grad = 2.0 * (a * x - fx * (b * x)) / den;
    bool accepted = false;
    VectorXd cand;
    double fc = fx;
    for (int tries = 0; tries < 60; ++tries) {
      cand = (x - step * grad).cwiseMax(0.0);
      const double nrm = cand.norm();
      if (nrm > 0) {
        cand /= nrm;
        fc = ratio_of(a, b, cand);
        if (fc <= fx - 1e-4 * grad.dot(x - cand)) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (cand - x).norm();
    const double gain = fx - fc;
    x = cand;
    fx = fc;
    step = std::min(step * 2.0, 1e6);
    if (moved < 1e-13 || gain <= 1e-16 * std::abs(fx)) break;
  }
  return x;
}

struct SdpSolution {
  MatrixXd b;
  VectorXd beta;
  double objective = 0.0;
};

/// Log-barrier interior point for
///   min tr(A B)  s.t.  tr(C B) = 1,  beta > 0,  B > 0 entrywise,  [1 beta^T; beta B] PSD.
/// Both A and C are assumed scaled to order one.
SdpSolution solve_relaxation(const MatrixXd& a, const MatrixXd& c) {
  const Index r = a.rows();
  const Index dim = r + 1;
  const Index m = r + r * (r + 1) / 2;

  // Variable k touches the listed (row, col) entries of the block matrix.
  std::vector<std::vector<std::pair<Index, Index>>> touch(static_cast<std::size_t>(m));
  VectorXd cost = VectorXd::Zero(m), eq = VectorXd::Zero(m);
  std::vector<std::pair<Index, Index>> b_index;  // (i, j) for B variables
  for (Index k = 0; k < r; ++k) touch[static_cast<std::size_t>(k)] = {{0, k + 1}, {k + 1, 0}};
  {
    Index k = r;
    for (Index i = 0; i < r; ++i)
      for (Index j = i; j < r; ++j, ++k) {
        auto& t = touch[static_cast<std::size_t>(k)];
        t.emplace_back(i + 1, j + 1);
        if (i != j) t.emplace_back(j + 1, i + 1);
        const double mult = i == j ? 1.0 : 2.0;
        cost(k) = mult * a(i, j);
        eq(k) = mult * c(i, j);
      }
  }

  auto block = [&](const VectorXd& x) {
    MatrixXd mm = MatrixXd::Zero(dim, dim);
    mm(0, 0) = 1.0;
    for (Index k = 0; k < m; ++k)
      for (const auto& [p, q] : touch[static_cast<std::size_t>(k)]) mm(p, q) += x(k);
    return mm;
  };
  auto barrier = [&](const VectorXd& x, double t, double& value) {
    if (x.minCoeff() <= 0) return false;
    Eigen::LLT<MatrixXd> llt(block(x));
    if (llt.info() != Eigen::Success) return false;
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(logdet)) return false;
    value = t * cost.dot(x) - x.array().log().sum() - logdet;
    return true;
  };

  // Strictly feasible start: B = s (I + 11^T), beta = 0.1 sqrt(s) 1.
  const MatrixXd start_b = MatrixXd::Identity(r, r) + MatrixXd::Ones(r, r);
  const double s = 1.0 / (c.array() * start_b.array()).sum();
  VectorXd x(m);
  x.head(r).setConstant(0.1 * std::sqrt(s));
  {
    Index k = r;
    for (Index i = 0; i < r; ++i)
      for (Index j = i; j < r; ++j, ++k) x(k) = s * start_b(i, j);
  }

  const double inequality_count = static_cast<double>(m + dim);
  double t = 1.0;
  for (int outer = 0; outer < 40 && inequality_count / t > 1e-10; ++outer) {
    for (int newton = 0; newton < 100; ++newton) {
      const MatrixXd inv = block(x).llt().solve(MatrixXd::Identity(dim, dim));
      VectorXd grad = t * cost - x.cwiseInverse();
      MatrixXd hess = x.array().square().inverse().matrix().asDiagonal();
      for (Index k = 0; k < m; ++k) {
        const auto& tk = touch[static_cast<std::size_t>(k)];
        for (const auto& [p, q] : tk) grad(k) -= inv(q, p);
        for (Index l = k; l < m; ++l) {
          double h = 0.0;
          for (const auto& [p, q] : tk)
            for (const auto& [u, v] : touch[static_cast<std::size_t>(l)]) h += inv(q, u) * inv(v, p);
          hess(k, l) += h;
          if (l != k) hess(l, k) += h;
        }
      }
      Eigen::LDLT<MatrixXd> ldlt(hess);
      const VectorXd hg = ldlt.solve(grad);
      const VectorXd ha = ldlt.solve(eq);
      const double nu = -eq.dot(hg) / eq.dot(ha);
      const VectorXd dx = -(hg + nu * ha);
      const double decrement = -grad.dot(dx);
      if (!(decrement > 2e-12)) break;
      double f0 = 0.0;
      barrier(x, t, f0);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        double f1 = 0.0;
        const VectorXd xn = x + step * dx;
        if (barrier(xn, t, f1) && f1 <= f0 - 0.25 * step * decrement) {
          x = xn;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    t *= 20.0;
  }

  SdpSolution sol;
  const MatrixXd mm = block(x);
  sol.beta = mm.block(1, 0, r, 1);
  sol.b = mm.bottomRightCorner(r, r);
  sol.objective = cost.dot(x);
  return sol;
}

}  // namespace

BetaResult optimize_beta_full(const MatrixXd& s_w_u, const MatrixXd& s_wp_u) {
  const Index r = s_w_u.rows();
  if (r < 1 || s_w_u.cols() != r || s_wp_u.rows() != r || s_wp_u.cols() != r)
    throw Error(ErrorCode::DimensionMismatch, "scatter matrices must be square and of equal size");
  if (!s_w_u.allFinite() || !s_wp_u.allFinite())
    throw Error(ErrorCode::NonFiniteInput, "scatter matrices have non-finite entries");

  BetaResult res;
  if (r == 1) {
    const double b = s_wp_u(0, 0);
    if (!(b > 0)) throw Error(ErrorCode::Infeasible, "no nonnegative weight satisfies the normalization");
    res.beta = VectorXd::Constant(1, 1.0 / std::sqrt(b));
    res.relaxed_beta = res.beta;
    res.objective = s_w_u(0, 0) / b;
    res.lower_bound = res.objective;
    return res;
  }

  const double tw = s_w_u.trace() > 0 ? s_w_u.trace() : 1.0;
  const double tp = s_wp_u.trace();
  const double reach = tp + s_wp_u.sum();  // trace(S_wp (I + 11^T))
  if (!(tp > 0) || !(reach > 1e-14 * std::max(1.0, s_wp_u.cwiseAbs().maxCoeff())))
    throw Error(ErrorCode::Infeasible, "no nonnegative weight satisfies the normalization");
  const MatrixXd a = s_w_u / tw;
  const MatrixXd c = s_wp_u / tp;

  std::vector<VectorXd> starts;
  // The barrier Hessian is dense in O(R^2) variables; beyond a couple of dozen
  // kernels only the vertex and uniform starts are used.
  if (r <= 24) {
    const SdpSolution sdp = solve_relaxation(a, c);
    res.lower_bound = sdp.objective * tw / tp;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sdp.b);
    VectorXd v = es.eigenvectors().col(r - 1);
    if (v.sum() < 0) v = -v;
    v = v.cwiseMax(0.0);
    if (v.maxCoeff() > 0 && v.dot(c * v) > 0) {
      res.relaxed_beta = v / std::sqrt(v.dot(s_wp_u * v));
      starts.push_back(v);
    }
  } else {
    res.lower_bound = -std::numeric_limits<double>::infinity();
  }
  for (Index k = 0; k < r; ++k)
    if (c(k, k) > 0) starts.push_back(VectorXd::Unit(r, k));
  starts.push_back(VectorXd::Ones(r));

  VectorXd best;
  double best_f = std::numeric_limits<double>::infinity();
  for (const auto& s0 : starts) {
    if (!(s0.dot(c * s0) > 0)) continue;
    const VectorXd x = refine_ratio(a, c, s0);
    const double f = ratio_of(a, c, x);
    if (f < best_f) {
      best_f = f;
      best = x;
    }
  }
  if (best.size() == 0 || !std::isfinite(best_f))
    throw Error(ErrorCode::Infeasible, "no nonnegative weight satisfies the normalization");

  res.beta = best / std::sqrt(best.dot(s_wp_u * best));
  if (res.relaxed_beta.size() == 0) res.relaxed_beta = res.beta;
  res.objective = res.beta.dot(s_w_u * res.beta);
  return res;
}

EmbeddingState alternate_u_beta(const KernelSliceStack& slices, const AffinityGraphs& graphs,
                                const VectorXd& init_beta, const EmbeddingOptions& opt) {
  if (init_beta.size() != slices.r()) throw Error(ErrorCode::DimensionMismatch, "initial weights have the wrong length");
  if (init_beta.minCoeff() < 0) throw Error(ErrorCode::NegativeWeight, "initial weights must be nonnegative");
  const ScatterForm pen = graphs.penalty_form();
  const Index d = std::max<Index>(1, std::min(opt.d, slices.n() - 1));

  EmbeddingState st;
  st.d = d;
  st.beta = init_beta;
  auto joint_ratio = [](const MatrixXd& sw, const MatrixXd& swp, const VectorXd& b) { return ratio_of(sw, swp, b); };

  TraceRatioOptions tro = opt.trace_ratio;
  for (int round = 0; round < opt.max_rounds; ++round) {
    const MatrixXd sw_b = scatter_beta(slices, st.beta, graphs.w, ScatterForm::Pairwise);
    const MatrixXd swp_b = scatter_beta(slices, st.beta, graphs.w_prime, pen);
    TraceRatioResult tr = optimize_u(sw_b, swp_b, d, tro);
    tro.initial_lambda = tr.ratio;

    MatrixXd sw_u = scatter_u(slices, tr.u, graphs.w, ScatterForm::Pairwise);
    MatrixXd swp_u = scatter_u(slices, tr.u, graphs.w_prime, pen);
    if (st.u.size() > 0) {
      // Keep the previous basis if the new one does not lower the joint ratio.
      const MatrixXd sw_old = scatter_u(slices, st.u, graphs.w, ScatterForm::Pairwise);
      const MatrixXd swp_old = scatter_u(slices, st.u, graphs.w_prime, pen);
      if (joint_ratio(sw_old, swp_old, st.beta) < joint_ratio(sw_u, swp_u, st.beta)) {
        tr.u = st.u;
        sw_u = sw_old;
        swp_u = swp_old;
      }
    }

    VectorXd next = optimize_beta(sw_u, swp_u);
    const double prev_den = st.beta.dot(swp_u * st.beta);
    if (prev_den > 0 && st.beta.minCoeff() >= 0 && st.beta.maxCoeff() > 0) {
      const VectorXd prev = st.beta / std::sqrt(prev_den);
      if (prev.dot(sw_u * prev) < next.dot(sw_u * next)) next = prev;
    }
    const double change = (next - st.beta).cwiseAbs().maxCoeff();
    st.u = std::move(tr.u);
    st.beta = std::move(next);
    st.objective_history.push_back(st.beta.dot(sw_u * st.beta));
    st.rounds = round + 1;
    if (change < opt.beta_tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

EmbeddingState alternate_multistart(const KernelSliceStack& slices, const AffinityGraphs& graphs,
                                    const VectorXd& init_beta, const EmbeddingOptions& opt) {
  if (slices.r() == 1) return alternate_u_beta(slices, graphs, init_beta, opt);
  std::vector<VectorXd> starts{init_beta};
  for (Index r = 0; r < slices.r(); ++r) starts.push_back(VectorXd::Unit(slices.r(), r));

  const bool screen = opt.screen_rounds > 0 && opt.screen_rounds < opt.max_rounds;
  EmbeddingOptions first = opt;
  if (screen) first.max_rounds = opt.screen_rounds;
  std::size_t best_start = 0;
  EmbeddingState best = alternate_u_beta(slices, graphs, starts[0], first);
  for (std::size_t i = 1; i < starts.size(); ++i) {
    EmbeddingState cur = alternate_u_beta(slices, graphs, starts[i], first);
    if (cur.objective_history.back() < best.objective_history.back()) {
      best = std::move(cur);
      best_start = i;
    }
  }
  // A screened start that already converged is final; otherwise rerun it in full.
  if (!screen || best.converged) return best;
  return alternate_u_beta(slices, graphs, starts[best_start], opt);
}

}  // namespace mksr
