#include "mksr/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>
#include <sstream>

#include "mksr/errors.hpp"
#include "mksr/eval.hpp"
#include "mksr/io.hpp"
#include "mksr/pipeline.hpp"
#include "mksr/synth.hpp"

namespace mksr {

namespace {

MatrixRole parse_role(const std::string& r) {
  if (r == "distance") return MatrixRole::Distance;
  if (r == "kernel") return MatrixRole::Kernel;
  throw Error(ErrorCode::InvalidArgument, "role must be distance or kernel");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(const VectorXd& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v(i));
  return s;
}

void repro_line(std::ostream& out, std::uint64_t hash, std::uint64_t seed) {
  out << "repro: config_hash=" << hex64(hash) << " seed=" << seed << " version=" << kVersion << "\n";
}

std::uint64_t args_hash(const std::vector<std::string>& args) {
  std::string all;
  for (std::size_t i = 1; i < args.size(); ++i) all += args[i] + '\0';
  return checksum(all);
}

struct Options {
  // make-kernel
  std::string distances, out, id = "kernel";
  double gamma = 0.0;
  bool normalize = false;
  // validate
  std::string kernel;
  double psd_tol = kPsdTol;
  // train
  std::string mode, config, manifest;
  long long seed = -1;
  // encode / eval
  std::string model;
  std::vector<std::string> cross;
  std::string cross_role = "distance";
  std::string train_codes, train_labels, test_codes, test_labels, codes, truth, csv;
  double ridge = 1e-3;
  long long k = 0;
  long long tau = 0;
  // synth
  std::string kind;
  long long classes = 3, per_class = 50, test_per_class = 30, kernels = 7;
  double separation = 4.0;
};

int cmd_make_kernel(const Options& o, std::ostream& out) {
  const MatrixXd d = read_matrix(o.distances);
  const GammaPolicy policy = o.gamma > 0 ? GammaPolicy::explicit_value(o.gamma) : GammaPolicy::mean_inverse();
  KernelMatrix<double> k = admit_kernel(kernel_from_distances(d, policy, o.id));
  if (o.normalize) k = normalize_kernel(std::move(k));
  write_matrix(o.out, k.values);
  out << "kernel: " << o.out << "\ngamma: " << fmt(k.gamma) << "\nscale: " << fmt(k.scale) << "\n";
  return 0;
}

int cmd_validate(const Options& o, std::ostream& out) {
  const MatrixXd k = read_matrix(o.kernel);
  const ValidationReport rep = validate_kernel(k, o.psd_tol);
  out << "size: " << k.rows() << "\n";
  out << "finite: " << (rep.finite ? "pass" : "fail") << "\n";
  out << "symmetry_defect: " << fmt(rep.symmetry_defect) << "\n";
  out << "Symmetric: " << (rep.symmetric ? "pass" : "fail") << "\n";
  out << "min_eigenvalue: " << fmt(rep.min_eigenvalue) << "\n";
  out << "max_eigenvalue: " << fmt(rep.max_eigenvalue) << "\n";
  out << "PSD: " << (rep.psd ? "pass" : "fail") << "\n";
  return rep.pass() ? 0 : 2;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainingConfig cfg = o.config.empty() ? TrainingConfig{} : load_config(o.config);
  if (!o.mode.empty()) {
    if (o.mode == "supervised")
      cfg.mode = TrainingMode::Supervised;
    else if (o.mode == "unsupervised")
      cfg.mode = TrainingMode::Unsupervised;
    else
      throw Error(ErrorCode::InvalidArgument, "mode must be supervised or unsupervised");
  }
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  const Manifest man = load_manifest(o.manifest);
  const KernelSet<double> ks = load_kernel_set(man);
  TrainedModel m;
  if (cfg.mode == TrainingMode::Supervised) {
    if (man.labels.empty()) throw Error(ErrorCode::InvalidArgument, "supervised training needs a labels file in the manifest");
    const std::vector<int> labels = read_labels(man.resolve(man.labels));
    m = train_supervised(ks, labels, cfg);
  } else {
    m = train_unsupervised(ks, cfg);
  }
  save_model(m, o.out);
  out << "model: " << o.out << "\n";
  out << "beta: " << join(m.beta) << "\n";
  out << "levels: " << m.mld.level_count() << " code_length: " << m.mld.code_length() << "\n";
  out << "rounds:\n" << format_round_log(m.history);
  for (const auto& w : m.warnings) out << "warning: " << w << "\n";
  repro_line(out, config_hash(cfg), cfg.seed);
  return 0;
}

int cmd_encode(const Options& o, std::ostream& out) {
  const TrainedModel m = load_model(o.model);
  std::vector<MatrixXd> cross;
  for (const auto& f : o.cross) cross.push_back(read_matrix(f));
  const MatrixXd codes = encode_cross(m, cross_kernel_rows(cross, parse_role(o.cross_role), m.gammas, m.scales));
  write_matrix(o.out, codes);
  out << "codes: " << o.out << " (" << codes.rows() << " x " << codes.cols() << ")\n";
  repro_line(out, config_hash(m.config), m.config.seed);
  return 0;
}

MatrixXd training_codes(const Options& o) {
  if (!o.train_codes.empty()) return read_matrix(o.train_codes);
  if (!o.model.empty()) return load_model(o.model).codes;
  throw Error(ErrorCode::InvalidArgument, "either --model or --train-codes is required");
}

int cmd_eval_classify(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const MatrixXd train = training_codes(o);
  const std::vector<int> train_labels = read_labels(o.train_labels);
  const MatrixXd test = read_matrix(o.test_codes);
  const std::vector<int> test_labels = read_labels(o.test_labels);
  const LinearClassifier clf = train_linear_classifier(train, train_labels, o.ridge);
  const MetricReport rep = score(clf.predict(test), test_labels, Task::Classify);
  out << rep.to_key_value();
  if (!o.csv.empty()) atomic_write(o.csv, rep.to_csv());
  repro_line(out, args_hash(args), 0);
  return 0;
}

int cmd_eval_cluster(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  MatrixXd codes;
  Index tau = o.tau;
  if (!o.codes.empty()) {
    codes = read_matrix(o.codes);
  } else if (!o.model.empty()) {
    const TrainedModel m = load_model(o.model);
    codes = m.codes;
    if (tau < 1) tau = m.config.tau;
  } else {
    throw Error(ErrorCode::InvalidArgument, "either --model or --codes is required");
  }
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "--tau is required with --codes");
  if (o.k < 1) throw Error(ErrorCode::InvalidArgument, "--k must be at least 1");
  const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  const std::vector<int> labels = spectral_cluster(final_code_graph(codes, tau), o.k, seed);
  if (!o.out.empty()) write_labels(o.out, labels);
  if (!o.truth.empty()) {
    const MetricReport rep = score(labels, read_labels(o.truth), Task::Cluster);
    out << rep.to_key_value();
    if (!o.csv.empty()) atomic_write(o.csv, rep.to_csv());
  } else {
    out << "clusters: " << o.k << "\n";
  }
  repro_line(out, args_hash(args), seed);
  return 0;
}

void write_dataset(const KernelDataset& ds, const fs::path& dir, const std::string& name, MatrixRole role,
                   bool has_test) {
  fs::create_directories(dir);
  Manifest man;
  man.dataset = name;
  man.base_dir = dir;
  for (std::size_t r = 0; r < ds.ids.size(); ++r) {
    const std::string train = "train_" + ds.ids[r] + ".mksm";
    write_matrix_binary(dir / train, ds.train[r]);
    if (has_test) write_matrix_binary(dir / ("test_" + ds.ids[r] + ".mksm"), ds.cross[r]);
    man.matrices.push_back({train, role, ds.ids[r]});
  }
  write_labels(dir / "train_labels.txt", ds.train_labels);
  if (has_test) write_labels(dir / "test_labels.txt", ds.test_labels);
  man.labels = "train_labels.txt";
  save_manifest(dir / "manifest.json", man);
}

int cmd_synth(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  const fs::path dir = o.out;
  KernelDataset ds;
  MatrixRole role = MatrixRole::Distance;
  bool has_test = true;
  if (o.kind == "gaussian-classes" || o.kind == "planted-subspaces") {
    const Index total = o.per_class + o.test_per_class;
    FeatureData f = o.kind == "gaussian-classes" ? gaussian_classes(o.classes, total, 5, o.separation, seed)
                                                 : planted_subspaces(10, o.classes, total, 0.05, seed);
    std::vector<Index> tr, te;
    for (std::size_t i = 0; i < f.labels.size(); ++i)
      (static_cast<Index>(i) % total < o.per_class ? tr : te).push_back(static_cast<Index>(i));
    MatrixXd xtr(f.x.rows(), static_cast<Index>(tr.size())), xte(f.x.rows(), static_cast<Index>(te.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xtr.col(static_cast<Index>(i)) = f.x.col(tr[i]);
      ds.train_labels.push_back(f.labels[static_cast<std::size_t>(tr[i])]);
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
      xte.col(static_cast<Index>(i)) = f.x.col(te[i]);
      ds.test_labels.push_back(f.labels[static_cast<std::size_t>(te[i])]);
    }
    if (o.kind == "gaussian-classes") {
      ds.ids = {"features"};
      ds.train = {squared_distances(xtr, xtr)};
      ds.cross = {squared_distances(xte, xtr)};
    } else {
      role = MatrixRole::Kernel;
      ds.ids = {"linear"};
      ds.train = {xtr.transpose() * xtr};
      ds.cross = {xte.transpose() * xtr};
    }
  } else if (o.kind == "two-kernel-planted") {
    ds = two_kernel_planted(o.classes, o.per_class, o.test_per_class, seed, o.separation);
  } else if (o.kind == "multi-kernel") {
    ds = multi_kernel_surrogate(o.classes, o.per_class, o.test_per_class, o.kernels, seed);
  } else if (o.kind == "planted-clusters") {
    ds = planted_clusters(o.classes, o.per_class, seed);
    has_test = false;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown synth kind '" + o.kind + "'");
  }
  write_dataset(ds, dir, o.kind, role, has_test);
  out << "dataset: " << dir.string() << " kind: " << o.kind << " kernels: " << ds.ids.size()
      << " train: " << ds.train_labels.size() << " test: " << ds.test_labels.size() << "\n";
  repro_line(out, checksum(o.kind), seed);
  return 0;
}

int cmd_inspect(const Options& o, std::ostream& out) {
  const TrainedModel m = load_model(o.model);
  out << "samples: " << m.n() << "\n";
  out << "kernels:";
  for (std::size_t r = 0; r < m.source_ids.size(); ++r)
    out << " " << m.source_ids[r] << "(gamma=" << fmt(m.gammas[r]) << ")";
  out << "\nbeta: " << join(m.beta) << "\n";
  out << "levels:";
  for (const auto& l : m.mld.levels) out << " " << l.k_atoms();
  out << "\ncollapsed: " << (m.mld.collapsed ? "yes" : "no") << "\n";
  out << "converged: " << (m.converged ? "yes" : "no") << "\n";
  out << "history:\n" << format_round_log(m.history);
  for (const auto& w : m.warnings) out << "warning: " << w << "\n";
  repro_line(out, config_hash(m.config), m.config.seed);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple-kernel sparse representation learning", "mksr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto* mk = app.add_subcommand("make-kernel", "Turn a distance matrix into an RBF kernel");
  mk->add_option("--distances", o.distances, "Distance matrix file")->required();
  mk->add_option("--out", o.out, "Output kernel file")->required();
  mk->add_option("--gamma", o.gamma, "Explicit gamma (default: 1 / mean distance)");
  mk->add_option("--id", o.id, "Kernel identifier");
  mk->add_flag("--normalize", o.normalize, "Scale to unit mean diagonal");

  auto* va = app.add_subcommand("validate", "Check symmetry and positive semidefiniteness");
  va->add_option("--kernel", o.kernel, "Kernel matrix file")->required();
  va->add_option("--psd-tol", o.psd_tol, "Relative eigenvalue tolerance");

  auto* tr = app.add_subcommand("train", "Train a model from a manifest");
  tr->add_option("--mode", o.mode, "supervised or unsupervised");
  tr->add_option("--config", o.config, "Config file");
  tr->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  tr->add_option("--out", o.out, "Model directory")->required();
  tr->add_option("--seed", o.seed, "Override the config seed");

  auto* en = app.add_subcommand("encode", "Encode new samples against a model");
  en->add_option("--model", o.model, "Model directory")->required();
  en->add_option("--cross", o.cross, "One test-to-train matrix per kernel, in model order")->required();
  en->add_option("--cross-role", o.cross_role, "distance or kernel");
  en->add_option("--out", o.out, "Output code matrix")->required();

  auto* ec = app.add_subcommand("eval-classify", "Ridge classifier on codes");
  ec->add_option("--model", o.model, "Model directory (training codes)");
  ec->add_option("--train-codes", o.train_codes, "Training code matrix");
  ec->add_option("--train-labels", o.train_labels, "Training labels")->required();
  ec->add_option("--test-codes", o.test_codes, "Test code matrix")->required();
  ec->add_option("--test-labels", o.test_labels, "Test labels")->required();
  ec->add_option("--ridge", o.ridge, "Ridge penalty");
  ec->add_option("--csv", o.csv, "Write metric rows here");

  auto* cl = app.add_subcommand("eval-cluster", "Spectral clustering of the code graph");
  cl->add_option("--model", o.model, "Model directory");
  cl->add_option("--codes", o.codes, "Code matrix");
  cl->add_option("--k", o.k, "Number of clusters")->required();
  cl->add_option("--tau", o.tau, "Neighbours kept per row (default: model tau)");
  cl->add_option("--truth", o.truth, "Reference labels");
  cl->add_option("--seed", o.seed, "k-means seed");
  cl->add_option("--out", o.out, "Write cluster labels here");
  cl->add_option("--csv", o.csv, "Write metric rows here");

  auto* sy = app.add_subcommand("synth", "Generate a planted dataset");
  sy->add_option("--kind", o.kind,
                 "gaussian-classes, planted-subspaces, two-kernel-planted, multi-kernel or planted-clusters")
      ->required();
  sy->add_option("--out", o.out, "Output directory")->required();
  sy->add_option("--seed", o.seed, "Seed");
  sy->add_option("--classes", o.classes, "Classes or clusters");
  sy->add_option("--per-class", o.per_class, "Training samples per class");
  sy->add_option("--test-per-class", o.test_per_class, "Test samples per class");
  sy->add_option("--kernels", o.kernels, "Kernel count (multi-kernel)");
  sy->add_option("--separation", o.separation, "Class separation");

  auto* in = app.add_subcommand("inspect", "Summarize a model");
  in->add_option("--model", o.model, "Model directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*mk) return cmd_make_kernel(o, out);
    if (*va) return cmd_validate(o, out);
    if (*tr) return cmd_train(o, out);
    if (*en) return cmd_encode(o, out);
    if (*ec) return cmd_eval_classify(o, args, out);
    if (*cl) return cmd_eval_cluster(o, args, out);
    if (*sy) return cmd_synth(o, out);
    if (*in) return cmd_inspect(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.error_class()) {
      case ErrorClass::Usage: return 1;
      case ErrorClass::Data: return 2;
      case ErrorClass::Numerical: return 3;
    }
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mksr
