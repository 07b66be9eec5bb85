#include "mksr/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mksr/errors.hpp"

namespace mksr {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'K', 'S', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  // Files are little-endian; swap on big-endian hosts.
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::CorruptContainer, what + ": truncated matrix file");
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorCode::ConfigError, "bad value for '" + key + "': '" + t + "'");
  return v;
}

double parse_double(const std::string& text, const std::string& what, ErrorCode code) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw Error(code, what + ": cannot parse '" + t + "'");
  return v;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd json_vec(const json& a) {
  VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

std::uint64_t checksum(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_matrix_binary(const MatrixXd& m) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 8);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  return out;
}

MatrixXd decode_matrix_binary(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::CorruptContainer, what + ": not an MKSM matrix file");
  std::size_t pos = 4;
  if (take<std::uint32_t>(bytes, pos, what) != kVersion)
    throw Error(ErrorCode::CorruptContainer, what + ": unsupported matrix file version");
  const auto rows = take<std::uint64_t>(bytes, pos, what);
  const auto cols = take<std::uint64_t>(bytes, pos, what);
  if (rows > 0 && cols > (bytes.size() - pos) / 8 / rows)
    throw Error(ErrorCode::CorruptContainer, what + ": matrix file size does not match its header");
  if (bytes.size() - pos != rows * cols * 8)
    throw Error(ErrorCode::CorruptContainer, what + ": matrix file size does not match its header");
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = take<double>(bytes, pos, what);
  return m;
}

void write_matrix_binary(const fs::path& path, const MatrixXd& m) { atomic_write(path, encode_matrix_binary(m)); }

MatrixXd read_matrix_binary(const fs::path& path) { return decode_matrix_binary(read_file(path), path.string()); }

void write_matrix_csv(const fs::path& path, const MatrixXd& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += fmt17(m(i, j));
    }
    out += '\n';
  }
  atomic_write(path, out);
}

MatrixXd read_matrix_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell, path.string(), ErrorCode::InvalidArgument));
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::DimensionMismatch, path.string() + ": ragged CSV rows");
    rows.push_back(std::move(row));
  }
  MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_matrix(const fs::path& path, const MatrixXd& m) {
  if (path.extension() == ".csv")
    write_matrix_csv(path, m);
  else
    write_matrix_binary(path, m);
}

MatrixXd read_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return decode_matrix_binary(bytes, path.string());
  return read_matrix_csv(path);
}

std::vector<int> read_labels(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || v < 0)
      throw Error(ErrorCode::InvalidArgument, path.string() + ": bad label '" + t + "'");
    labels.push_back(v);
  }
  return labels;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  atomic_write(path, out);
}

fs::path Manifest::resolve(const std::string& p) const {
  const fs::path q(p);
  return q.is_absolute() ? q : base_dir / q;
}

Manifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    m.dataset = j.value("dataset", std::string{});
    for (const auto& e : j.at("matrices")) {
      ManifestEntry me;
      me.path = e.at("path").get<std::string>();
      const std::string role = e.value("role", std::string("distance"));
      if (role == "distance")
        me.role = MatrixRole::Distance;
      else if (role == "kernel")
        me.role = MatrixRole::Kernel;
      else
        throw Error(ErrorCode::InvalidArgument, "unknown matrix role '" + role + "'");
      me.source_id = e.value("source_id", me.path);
      m.matrices.push_back(std::move(me));
    }
    m.labels = j.value("labels", std::string{});
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      const std::string policy = k.value("gamma_policy", std::string("mean_inverse"));
      if (policy == "mean_inverse")
        m.gamma = GammaPolicy::mean_inverse();
      else if (policy == "explicit")
        m.gamma = GammaPolicy::explicit_value(k.at("gamma").get<double>());
      else
        throw Error(ErrorCode::InvalidArgument, "unknown gamma_policy '" + policy + "'");
      m.normalize = k.value("normalize", true);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  if (m.matrices.empty()) throw Error(ErrorCode::InvalidArgument, path.string() + ": no matrices listed");
  for (std::size_t a = 0; a < m.matrices.size(); ++a)
    for (std::size_t b = a + 1; b < m.matrices.size(); ++b)
      if (m.matrices[a].path == m.matrices[b].path && m.matrices[a].role != m.matrices[b].role)
        throw Error(ErrorCode::InvalidArgument, "file listed as both distance and kernel: " + m.matrices[a].path);
  return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
  json j;
  j["dataset"] = m.dataset;
  j["matrices"] = json::array();
  for (const auto& e : m.matrices)
    j["matrices"].push_back(
        {{"path", e.path}, {"role", e.role == MatrixRole::Distance ? "distance" : "kernel"}, {"source_id", e.source_id}});
  if (!m.labels.empty()) j["labels"] = m.labels;
  json k;
  k["gamma_policy"] = m.gamma.kind == GammaPolicy::Kind::MeanInverse ? "mean_inverse" : "explicit";
  if (m.gamma.kind == GammaPolicy::Kind::Explicit) k["gamma"] = m.gamma.gamma;
  k["normalize"] = m.normalize;
  j["kernel"] = k;
  atomic_write(path, j.dump(2) + "\n");
}

KernelSet<double> build_kernel_set(const std::vector<MatrixXd>& matrices, const std::vector<std::string>& ids,
                                   MatrixRole role, GammaPolicy gamma, bool normalize) {
  if (matrices.size() != ids.size()) throw Error(ErrorCode::DimensionMismatch, "one id per matrix is required");
  KernelSet<double> ks;
  for (std::size_t r = 0; r < matrices.size(); ++r) {
    KernelMatrix<double> k;
    if (role == MatrixRole::Distance) {
      k = kernel_from_distances(matrices[r], gamma, ids[r]);
    } else {
      k.values = matrices[r];
      k.source_id = ids[r];
    }
    k = admit_kernel(std::move(k));
    if (normalize) k = normalize_kernel(std::move(k));
    ks.kernels.push_back(std::move(k));
  }
  check_kernel_set(ks);
  return ks;
}

KernelSet<double> load_kernel_set(const Manifest& m) {
  KernelSet<double> ks;
  for (const auto& e : m.matrices) {
    const MatrixXd mat = read_matrix(m.resolve(e.path));
    KernelSet<double> one = build_kernel_set({mat}, {e.source_id}, e.role, m.gamma, m.normalize);
    ks.kernels.push_back(std::move(one.kernels.front()));
  }
  check_kernel_set(ks);
  return ks;
}

std::vector<MatrixXd> cross_kernel_rows(const std::vector<MatrixXd>& cross, MatrixRole role,
                                        const std::vector<double>& gammas, const std::vector<double>& scales) {
  if (cross.size() != gammas.size() || cross.size() != scales.size())
    throw Error(ErrorCode::DimensionMismatch, "one cross matrix per kernel is required");
  std::vector<MatrixXd> rows;
  for (std::size_t r = 0; r < cross.size(); ++r) {
    MatrixXd k = role == MatrixRole::Distance ? cross_kernel_from_distances(cross[r], gammas[r]) : cross[r];
    if (!k.allFinite()) throw Error(ErrorCode::NonFiniteInput, "cross kernel has non-finite entries");
    rows.push_back(k / scales[r]);
  }
  return rows;
}

TrainingConfig parse_config(const std::string& text) {
  TrainingConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (val != "oxford") throw Error(ErrorCode::ConfigError, "unknown preset '" + val + "'");
      const TrainingConfig p = TrainingConfig::oxford();
      c.s_levels = p.s_levels;
      c.k_atoms = p.k_atoms;
      c.tau = p.tau;
      c.tau_prime = p.tau_prime;
      c.d = p.d;
    } else if (key == "mode") {
      if (val == "supervised")
        c.mode = TrainingMode::Supervised;
      else if (val == "unsupervised")
        c.mode = TrainingMode::Unsupervised;
      else
        throw Error(ErrorCode::ConfigError, "unknown mode '" + val + "'");
    } else if (key == "s_levels") {
      c.s_levels = parse_number<Index>(val, key);
    } else if (key == "k_atoms") {
      c.k_atoms.clear();
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) c.k_atoms.push_back(parse_number<Index>(item, key));
    } else if (key == "d") {
      c.d = parse_number<Index>(val, key);
    } else if (key == "tau") {
      c.tau = parse_number<Index>(val, key);
    } else if (key == "tau_prime") {
      c.tau_prime = parse_number<Index>(val, key);
    } else if (key == "inner_L") {
      c.inner_iters = parse_number<int>(val, key);
    } else if (key == "khypl_max_outer") {
      c.khypl_max_outer = parse_number<int>(val, key);
    } else if (key == "outer_rounds_max") {
      c.outer_rounds_max = parse_number<int>(val, key);
    } else if (key == "outer_beta_tol") {
      c.outer_beta_tol = parse_double(val, key, ErrorCode::ConfigError);
    } else if (key == "alternation_rounds") {
      c.alternation_rounds = parse_number<int>(val, key);
    } else if (key == "alternation_tol") {
      c.alternation_tol = parse_double(val, key, ErrorCode::ConfigError);
    } else if (key == "weight_multistart") {
      if (val != "true" && val != "false") throw Error(ErrorCode::ConfigError, "weight_multistart must be true or false");
      c.weight_multistart = val == "true";
    } else if (key == "weight_screen_rounds") {
      c.weight_screen_rounds = parse_number<int>(val, key);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(val, key);
    } else {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainingConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string config_to_text(const TrainingConfig& c) {
  std::ostringstream out;
  out << "mode = " << (c.mode == TrainingMode::Supervised ? "supervised" : "unsupervised") << "\n";
  out << "s_levels = " << c.s_levels << "\n";
  out << "k_atoms = ";
  for (std::size_t i = 0; i < c.k_atoms.size(); ++i) out << (i ? "," : "") << c.k_atoms[i];
  out << "\n";
  out << "d = " << c.d << "\n";
  out << "tau = " << c.tau << "\n";
  out << "tau_prime = " << c.tau_prime << "\n";
  out << "inner_L = " << c.inner_iters << "\n";
  out << "khypl_max_outer = " << c.khypl_max_outer << "\n";
  out << "outer_rounds_max = " << c.outer_rounds_max << "\n";
  out << "outer_beta_tol = " << fmt17(c.outer_beta_tol) << "\n";
  out << "alternation_rounds = " << c.alternation_rounds << "\n";
  out << "alternation_tol = " << fmt17(c.alternation_tol) << "\n";
  out << "weight_multistart = " << (c.weight_multistart ? "true" : "false") << "\n";
  out << "weight_screen_rounds = " << c.weight_screen_rounds << "\n";
  out << "seed = " << c.seed << "\n";
  return out.str();
}

std::uint64_t config_hash(const TrainingConfig& cfg) { return checksum(config_to_text(cfg)); }

namespace {

void put_blob(const fs::path& dir, json& index, const std::string& name, const MatrixXd& m) {
  const std::string bytes = encode_matrix_binary(m);
  atomic_write(dir / name, bytes);
  index[name] = hex64(checksum(bytes));
}

MatrixXd get_blob(const fs::path& dir, const json& index, const std::string& name) {
  if (!index.contains(name)) throw Error(ErrorCode::CorruptContainer, "container does not list blob " + name);
  std::string bytes;
  try {
    bytes = read_file(dir / name);
  } catch (const Error&) {
    throw Error(ErrorCode::CorruptContainer, "missing blob " + name);
  }
  if (hex64(checksum(bytes)) != index.at(name).get<std::string>())
    throw Error(ErrorCode::CorruptContainer, "checksum mismatch for blob " + name);
  return decode_matrix_binary(bytes, name);
}

std::string level_blob(Index s, const char* part) { return "level" + std::to_string(s) + "_" + part + ".mksm"; }

}  // namespace

void save_model(const TrainedModel& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  json blobs = json::object();
  put_blob(dir, blobs, "kyy.mksm", m.kyy);
  put_blob(dir, blobs, "codes.mksm", m.codes);
  put_blob(dir, blobs, "w.mksm", m.graphs.w);
  put_blob(dir, blobs, "w_prime.mksm", m.graphs.w_prime);
  json levels = json::array();
  for (Index s = 0; s < m.mld.level_count(); ++s) {
    const auto& l = m.mld.levels[static_cast<std::size_t>(s)];
    // A_s has exactly one stored entry per row: (row, column, value).
    MatrixXd triplets(l.a.rows(), 3);
    MatrixXd z(l.a.rows(), 1);
    for (Index i = 0; i < l.a.rows(); ++i) {
      const Index k = l.assignment[static_cast<std::size_t>(i)];
      triplets.row(i) << static_cast<double>(i), static_cast<double>(k), l.a(i, k);
      z(i, 0) = static_cast<double>(k);
    }
    put_blob(dir, blobs, level_blob(s, "a"), triplets);
    put_blob(dir, blobs, level_blob(s, "d"), l.d);
    put_blob(dir, blobs, level_blob(s, "z"), z);
    levels.push_back({{"k_atoms", l.k_atoms()}});
  }

  json j;
  j["format"] = "mksr-model";
  j["version"] = 1;
  j["config"] = config_to_text(m.config);
  j["beta"] = vec_json(m.beta);
  j["gammas"] = m.gammas;
  j["scales"] = m.scales;
  j["source_ids"] = m.source_ids;
  j["n"] = m.mld.n;
  j["requested_levels"] = m.mld.requested_levels;
  j["collapsed"] = m.mld.collapsed;
  j["kernel_fingerprint"] = hex64(m.mld.kernel_fingerprint);
  j["levels"] = levels;
  j["graph_mode"] = m.graphs.mode == GraphMode::Supervised ? "supervised" : "unsupervised";
  j["converged"] = m.converged;
  j["warnings"] = m.warnings;
  json hist = json::array();
  for (const auto& r : m.history)
    hist.push_back({{"round", r.round}, {"beta", vec_json(r.beta)}, {"trace_ratio", r.trace_ratio},
                    {"mean_energy", r.mean_energy}});
  j["history"] = hist;
  j["blobs"] = blobs;
  atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

TrainedModel load_model(const fs::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptContainer, "model manifest: " + std::string(e.what()));
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptContainer, e.what());
  }
  TrainedModel m;
  try {
    if (j.at("format").get<std::string>() != "mksr-model" || j.at("version").get<int>() != 1)
      throw Error(ErrorCode::CorruptContainer, "not a model container");
    const json& blobs = j.at("blobs");
    m.config = parse_config(j.at("config").get<std::string>());
    m.beta = json_vec(j.at("beta"));
    m.gammas = j.at("gammas").get<std::vector<double>>();
    m.scales = j.at("scales").get<std::vector<double>>();
    m.source_ids = j.at("source_ids").get<std::vector<std::string>>();
    m.kyy = get_blob(dir, blobs, "kyy.mksm");
    m.codes = get_blob(dir, blobs, "codes.mksm");
    m.graphs.w = get_blob(dir, blobs, "w.mksm");
    m.graphs.w_prime = get_blob(dir, blobs, "w_prime.mksm");
    m.graphs.mode = j.at("graph_mode").get<std::string>() == "supervised" ? GraphMode::Supervised : GraphMode::Unsupervised;
    m.mld.n = j.at("n").get<Index>();
    m.mld.requested_levels = j.at("requested_levels").get<Index>();
    m.mld.collapsed = j.at("collapsed").get<bool>();
    m.mld.kernel_fingerprint = std::stoull(j.at("kernel_fingerprint").get<std::string>(), nullptr, 16);
    const auto& levels = j.at("levels");
    for (std::size_t s = 0; s < levels.size(); ++s) {
      const Index k = levels[s].at("k_atoms").get<Index>();
      const MatrixXd tri = get_blob(dir, blobs, level_blob(static_cast<Index>(s), "a"));
      const MatrixXd d = get_blob(dir, blobs, level_blob(static_cast<Index>(s), "d"));
      const MatrixXd z = get_blob(dir, blobs, level_blob(static_cast<Index>(s), "z"));
      if (tri.rows() != m.mld.n || tri.cols() != 3 || d.rows() != k || d.cols() != 1 || z.rows() != m.mld.n)
        throw Error(ErrorCode::CorruptContainer, "level " + std::to_string(s) + " blobs have the wrong shape");
      LevelState<double> l;
      l.a = MatrixXd::Zero(m.mld.n, k);
      l.d = d.col(0);
      for (Index i = 0; i < m.mld.n; ++i) {
        const auto col = static_cast<Index>(z(i, 0));
        if (col < 0 || col >= k || static_cast<Index>(tri(i, 1)) != col)
          throw Error(ErrorCode::CorruptContainer, "level " + std::to_string(s) + " assignment out of range");
        l.assignment.push_back(col);
        l.a(i, col) = tri(i, 2);
      }
      m.mld.levels.push_back(std::move(l));
    }
    m.converged = j.at("converged").get<bool>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& r : j.at("history")) {
      RoundLog log;
      log.round = r.at("round").get<int>();
      log.beta = json_vec(r.at("beta"));
      log.trace_ratio = r.at("trace_ratio").get<double>();
      log.mean_energy = r.at("mean_energy").get<double>();
      m.history.push_back(std::move(log));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptContainer, "model manifest: " + std::string(e.what()));
  }
  if (m.kyy.rows() != m.mld.n || fingerprint(m.kyy) != m.mld.kernel_fingerprint)
    throw Error(ErrorCode::CorruptContainer, "stored Gram matrix does not match the dictionary fingerprint");
  if (m.beta.size() != static_cast<Index>(m.gammas.size()) || m.gammas.size() != m.scales.size())
    throw Error(ErrorCode::CorruptContainer, "kernel metadata lengths disagree");
  return m;
}

}  // namespace mksr
