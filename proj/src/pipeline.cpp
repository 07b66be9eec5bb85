#include "mksr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "mksr/errors.hpp"

namespace mksr {

TrainingConfig TrainingConfig::oxford() {
  TrainingConfig c;
  c.s_levels = 8;
  c.k_atoms = {16};
  c.tau = 8;
  c.tau_prime = 20;
  c.d = 100;
  return c;
}

void TrainingConfig::validate() const {
  auto positive = [](long long v, const char* name) {
    if (v < 1) throw Error(ErrorCode::ConfigError, std::string(name) + " must be at least 1");
  };
  positive(s_levels, "s_levels");
  positive(d, "d");
  positive(tau, "tau");
  positive(tau_prime, "tau_prime");
  positive(inner_iters, "inner_L");
  positive(khypl_max_outer, "khypl_max_outer");
  positive(outer_rounds_max, "outer_rounds_max");
  positive(alternation_rounds, "alternation_rounds");
  if (k_atoms.empty()) throw Error(ErrorCode::ConfigError, "k_atoms is empty");
  if (k_atoms.size() != 1 && static_cast<Index>(k_atoms.size()) != s_levels)
    throw Error(ErrorCode::ConfigError, "k_atoms must have one entry or one per level");
  for (Index k : k_atoms) positive(k, "k_atoms");
  if (weight_screen_rounds < 0) throw Error(ErrorCode::ConfigError, "weight_screen_rounds must be nonnegative");
  if (!(outer_beta_tol >= 0) || !(alternation_tol >= 0))
    throw Error(ErrorCode::ConfigError, "tolerances must be nonnegative");
}

KmldOptions TrainingConfig::kmld_options(std::uint64_t round_seed) const {
  KmldOptions o;
  o.s_levels = s_levels;
  o.k_atoms = k_atoms;
  o.inner_iters = inner_iters;
  o.max_outer = khypl_max_outer;
  o.seed = round_seed;
  return o;
}

MatrixXd encode_cross(const TrainedModel& m, const std::vector<MatrixXd>& cross_rows) {
  const MatrixXd kxy = cross_ensemble(cross_rows, m.beta);
  if (kxy.cols() != m.n()) throw Error(ErrorCode::DimensionMismatch, "cross rows do not match the training size");
  return Encoder<double>(m.kyy, m.mld).encode_rows(kxy);
}

VectorXd cross_self_similarity(const TrainedModel& m, const std::vector<VectorXd>& diagonals) {
  if (static_cast<Index>(diagonals.size()) != m.beta.size())
    throw Error(ErrorCode::DimensionMismatch, "one diagonal per kernel is required");
  VectorXd out = VectorXd::Zero(diagonals.front().size());
  for (std::size_t r = 0; r < diagonals.size(); ++r) {
    if (diagonals[r].size() != out.size()) throw Error(ErrorCode::DimensionMismatch, "diagonal lengths differ");
    out += m.beta(static_cast<Index>(r)) * diagonals[r];
  }
  return out;
}

namespace {

std::vector<Index> top_by_row(const MatrixXd& c, Index i, const std::vector<Index>& candidates, Index count) {
  std::vector<Index> idx = candidates;
  const auto take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(count));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), [&](Index a, Index b) {
    if (c(i, a) != c(i, b)) return c(i, a) > c(i, b);
    return a < b;
  });
  idx.resize(take);
  return idx;
}

void check_codes(const MatrixXd& codes) {
  if (codes.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "no codes");
  if (!codes.allFinite()) throw Error(ErrorCode::NonFiniteInput, "codes have non-finite entries");
}

double mean_energy(const Encoder<double>& enc, const MatrixXd& kyy, const MatrixXd& codes) {
  double total = 0.0;
  for (Index i = 0; i < kyy.rows(); ++i) total += enc.reconstruction_energy(kyy(i, i), kyy.row(i), codes.col(i));
  return total / static_cast<double>(kyy.rows());
}

void describe_kernels(const KernelSet<double>& ks, TrainedModel& m) {
  for (const auto& k : ks.kernels) {
    m.gammas.push_back(k.gamma);
    m.scales.push_back(k.scale);
    m.source_ids.push_back(k.source_id);
  }
}

TrainedModel run(const KernelSet<double>& ks, std::span<const int> labels, const TrainingConfig& cfg) {
  cfg.validate();
  check_kernel_set(ks);
  const bool supervised = cfg.mode == TrainingMode::Supervised;
  const Index n = ks.n();
  if (n < 2) throw Error(ErrorCode::DimensionMismatch, "at least two samples are required");

  TrainedModel m;
  m.config = cfg;
  describe_kernels(ks, m);
  if (supervised) {
    if (static_cast<Index>(labels.size()) != n)
      throw Error(ErrorCode::DimensionMismatch, "label count does not match the kernel size");
    const std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw Error(ErrorCode::ClassTooSmall, "supervised training needs at least two classes");
    m.graphs = init_affinities(ks, labels, cfg.tau, cfg.tau_prime);
  } else {
    m.graphs = init_affinities_unsupervised(ks, cfg.tau);
  }

  const KernelSliceStack slices = build_slices(ks);
  EmbeddingOptions eo;
  eo.d = std::min<Index>(cfg.d, n - 1);
  eo.max_rounds = cfg.alternation_rounds;
  eo.beta_tol = cfg.alternation_tol;
  eo.screen_rounds = cfg.weight_screen_rounds;

  VectorXd beta = VectorXd::Constant(ks.size(), 1.0 / static_cast<double>(ks.size()));
  for (int round = 0; round < cfg.outer_rounds_max; ++round) {
    const EmbeddingState emb = cfg.weight_multistart ? alternate_multistart(slices, m.graphs, beta, eo)
                                                     : alternate_u_beta(slices, m.graphs, beta, eo);
    if (!emb.converged)
      m.warnings.push_back("round " + std::to_string(round) + ": weight alternation hit its round limit");

    m.kyy = ensemble(ks, emb.beta).values;
    m.mld = train_kmld(m.kyy, cfg.kmld_options(derive_seed(cfg.seed, static_cast<std::uint64_t>(round))));
    const Encoder<double> enc(m.kyy, m.mld);
    m.codes = enc.encode_rows(m.kyy);

    RoundLog log;
    log.round = round;
    log.beta = emb.beta;
    log.trace_ratio = emb.objective_history.empty() ? 0.0 : emb.objective_history.back();
    log.mean_energy = mean_energy(enc, m.kyy, m.codes);
    m.history.push_back(log);

    const double change = (emb.beta - beta).cwiseAbs().maxCoeff();
    beta = emb.beta;
    m.beta = beta;

    AffinityGraphs next;
    if (supervised) {
      next = update_affinities_from_codes(m.codes, labels, cfg.tau, cfg.tau_prime);
    } else {
      next.mode = GraphMode::Unsupervised;
      next.w = final_code_graph(m.codes, cfg.tau);
      next.w_prime = degree_matrix(next.w);
    }
    if (next.w.sum() > 0 && next.w_prime.sum() > 0) {
      m.graphs = std::move(next);
    } else {
      m.warnings.push_back("round " + std::to_string(round) + ": code graph is empty; previous graphs kept");
    }

    if (change < cfg.outer_beta_tol) {
      m.converged = true;
      break;
    }
  }
  if (!m.converged) m.warnings.push_back("outer loop stopped at outer_rounds_max");
  return m;
}

}  // namespace

TrainedModel train_supervised(const KernelSet<double>& ks, std::span<const int> labels, const TrainingConfig& cfg) {
  TrainingConfig c = cfg;
  c.mode = TrainingMode::Supervised;
  return run(ks, labels, c);
}

TrainedModel train_unsupervised(const KernelSet<double>& ks, const TrainingConfig& cfg) {
  TrainingConfig c = cfg;
  c.mode = TrainingMode::Unsupervised;
  return run(ks, {}, c);
}

AffinityGraphs update_affinities_from_codes(const MatrixXd& codes, std::span<const int> labels, Index tau,
                                            Index tau_prime) {
  check_codes(codes);
  const Index n = codes.cols();
  if (static_cast<Index>(labels.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "label count does not match the code count");
  if (tau < 1 || tau_prime < 1) throw Error(ErrorCode::InvalidArgument, "neighbourhood sizes must be at least 1");
  const MatrixXd c = (codes.transpose() * codes).cwiseAbs();
  AffinityGraphs g;
  g.mode = GraphMode::Supervised;
  g.w = MatrixXd::Zero(n, n);
  g.w_prime = MatrixXd::Zero(n, n);
  std::vector<Index> same, diff;
  for (Index i = 0; i < n; ++i) {
    same.clear();
    diff.clear();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)] ? same : diff).push_back(j);
    }
    for (Index j : top_by_row(c, i, same, tau)) g.w(i, j) = c(i, j);
    for (Index j : top_by_row(c, i, diff, tau_prime)) g.w_prime(i, j) = c(i, j);
  }
  g.w = g.w.cwiseMax(g.w.transpose());
  g.w_prime = g.w_prime.cwiseMax(g.w_prime.transpose());
  return g;
}

MatrixXd final_code_graph(const MatrixXd& codes, Index tau) {
  check_codes(codes);
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "tau must be at least 1");
  const Index n = codes.cols();
  const MatrixXd c = (codes.transpose() * codes).cwiseAbs();
  MatrixXd w = MatrixXd::Zero(n, n);
  std::vector<Index> others;
  for (Index i = 0; i < n; ++i) {
    others.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    for (Index j : top_by_row(c, i, others, tau)) w(i, j) = c(i, j);
  }
  return w.cwiseMax(w.transpose());
}

std::string format_round_log(const std::vector<RoundLog>& history) {
  std::ostringstream out;
  char buf[64];
  for (const auto& r : history) {
    out << r.round << " [";
    for (Index k = 0; k < r.beta.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.10g", r.beta(k));
      out << (k ? " " : "") << buf;
    }
    std::snprintf(buf, sizeof buf, "] %.10g %.10g\n", r.trace_ratio, r.mean_energy);
    out << buf;
  }
  return out.str();
}

}  // namespace mksr
