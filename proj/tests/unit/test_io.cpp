#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "mksr/cli.hpp"
#include "mksr/io.hpp"
#include "mksr/synth.hpp"

using namespace mksr;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("mksr_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name() + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

MatrixXd random_matrix(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng) * 1e3;
  return m;
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.s_levels = 2;
  c.k_atoms = {3};
  c.d = 4;
  c.tau = 3;
  c.tau_prime = 4;
  c.outer_rounds_max = 2;
  c.alternation_rounds = 3;
  c.seed = 5;
  return c;
}

TrainedModel small_model(KernelSet<double>& ks) {
  const auto data = two_kernel_planted(3, 8, 0, 2);
  ks = build_kernel_set(data.train, data.ids, MatrixRole::Distance, GammaPolicy::mean_inverse(), true);
  return train_supervised(ks, data.train_labels, small_config());
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "mksr");
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

}  // namespace

TEST(MatrixIo, BinaryRoundTripIsExact) {
  TempDir dir;
  const MatrixXd m = random_matrix(5, 3, 1);
  write_matrix(dir.path() / "m.mksm", m);
  EXPECT_EQ(read_matrix(dir.path() / "m.mksm"), m);
  EXPECT_EQ(decode_matrix_binary(encode_matrix_binary(m), "mem"), m);
}

TEST(MatrixIo, CsvRoundTripIsExact) {
  TempDir dir;
  const MatrixXd m = random_matrix(4, 4, 2);
  write_matrix(dir.path() / "m.csv", m);
  EXPECT_EQ(read_matrix(dir.path() / "m.csv"), m);
}

TEST(MatrixIo, TruncatedBinaryIsRejected) {
  std::string bytes = encode_matrix_binary(random_matrix(3, 3, 3));
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_matrix_binary(bytes, "mem"), Error);
  EXPECT_THROW(read_matrix("/nonexistent/file.mksm"), Error);
}

TEST(LabelIo, RoundTrip) {
  TempDir dir;
  const std::vector<int> labels = {2, 0, 1, 1};
  write_labels(dir.path() / "l.txt", labels);
  EXPECT_EQ(read_labels(dir.path() / "l.txt"), labels);
}

TEST(Manifest, SaveLoadAndResolve) {
  TempDir dir;
  Manifest m;
  m.dataset = "toy";
  m.matrices = {{"a.mksm", MatrixRole::Distance, "a"}, {"b.mksm", MatrixRole::Kernel, "b"}};
  m.labels = "labels.txt";
  m.gamma = GammaPolicy::explicit_value(0.5);
  m.normalize = false;
  save_manifest(dir.path() / "manifest.json", m);
  const Manifest back = load_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(back.dataset, "toy");
  ASSERT_EQ(back.matrices.size(), 2u);
  EXPECT_EQ(back.matrices[1].role, MatrixRole::Kernel);
  EXPECT_EQ(back.gamma.kind, GammaPolicy::Kind::Explicit);
  EXPECT_EQ(back.gamma.gamma, 0.5);
  EXPECT_FALSE(back.normalize);
  EXPECT_EQ(back.resolve("a.mksm"), dir.path() / "a.mksm");
}

TEST(Config, ParsesKeysCommentsAndPreset) {
  const auto c = parse_config("# comment\npreset = oxford\ntau = 6  # inline\nseed = 9\n");
  EXPECT_EQ(c.s_levels, 8);
  EXPECT_EQ(c.k_atoms, std::vector<Index>{16});
  EXPECT_EQ(c.tau, 6);
  EXPECT_EQ(c.tau_prime, 20);
  EXPECT_EQ(c.d, 100);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, UnknownKeyAndBadValueAreErrors) {
  try {
    parse_config("tua = 3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  EXPECT_THROW(parse_config("tau = three\n"), Error);
  EXPECT_THROW(parse_config("tau = 0\n"), Error);
}

TEST(Config, TextRoundTripPreservesHash) {
  const TrainingConfig c = small_config();
  const TrainingConfig back = parse_config(config_to_text(c));
  EXPECT_EQ(config_to_text(back), config_to_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  TrainingConfig d = c;
  d.tau += 1;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(CrossRows, DistanceRowsMatchTrainingKernel) {
  const auto data = two_kernel_planted(2, 5, 0, 1);
  const auto ks = build_kernel_set(data.train, data.ids, MatrixRole::Distance, GammaPolicy::mean_inverse(), true);
  std::vector<double> gammas, scales;
  for (const auto& k : ks.kernels) {
    gammas.push_back(k.gamma);
    scales.push_back(k.scale);
  }
  const auto rows = cross_kernel_rows(data.train, MatrixRole::Distance, gammas, scales);
  for (Index r = 0; r < ks.size(); ++r) {
    MatrixXd expected = ks[r];
    expected.diagonal() = rows[static_cast<std::size_t>(r)].diagonal();
    EXPECT_LT((rows[static_cast<std::size_t>(r)] - expected).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(ModelIo, RoundTripPreservesEverything) {
  TempDir dir;
  KernelSet<double> ks;
  const TrainedModel m = small_model(ks);
  save_model(m, dir.path() / "model");
  const TrainedModel back = load_model(dir.path() / "model");
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(back.codes, m.codes);
  EXPECT_EQ(back.kyy, m.kyy);
  EXPECT_EQ(back.graphs.w, m.graphs.w);
  EXPECT_EQ(back.source_ids, m.source_ids);
  EXPECT_EQ(back.mld.level_count(), m.mld.level_count());
  for (std::size_t s = 0; s < m.mld.levels.size(); ++s) {
    EXPECT_EQ(back.mld.levels[s].a, m.mld.levels[s].a);
    EXPECT_EQ(back.mld.levels[s].d, m.mld.levels[s].d);
    EXPECT_EQ(back.mld.levels[s].assignment, m.mld.levels[s].assignment);
  }
  EXPECT_EQ(config_to_text(back.config), config_to_text(m.config));
  EXPECT_EQ(Encoder<double>(back.kyy, back.mld).encode_rows(back.kyy), m.codes);
}

TEST(ModelIo, TamperedBlobIsCorrupt) {
  TempDir dir;
  KernelSet<double> ks;
  save_model(small_model(ks), dir.path() / "model");
  const fs::path blob = dir.path() / "model" / "codes.mksm";
  std::string bytes = read_file(blob);
  bytes[bytes.size() - 1] ^= 0x01;
  std::ofstream(blob, std::ios::binary | std::ios::trunc) << bytes;
  try {
    load_model(dir.path() / "model");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptContainer);
  }
}

TEST(ModelIo, MissingManifestIsCorruptOrIo) {
  TempDir dir;
  EXPECT_THROW(load_model(dir.path() / "nothing"), Error);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli({"frobnicate"}), 1);
  EXPECT_EQ(cli({"train"}), 1);
  std::string text;
  EXPECT_EQ(cli({"--version"}, &text), 0);
  EXPECT_NE(text.find(kVersion), std::string::npos);
}

TEST(Cli, ValidateReportsIndefiniteKernel) {
  TempDir dir;
  MatrixXd k(2, 2);
  k << 1, 2, 2, 1;
  write_matrix(dir.path() / "k.csv", k);
  std::string text;
  EXPECT_EQ(cli({"validate", "--kernel", (dir.path() / "k.csv").string()}, &text), 2);
  EXPECT_NE(text.find("PSD: fail"), std::string::npos);
  EXPECT_EQ(cli({"validate", "--kernel", (dir.path() / "missing.csv").string()}), 2);
}

TEST(Cli, MakeKernelMatchesLibrary) {
  TempDir dir;
  const auto data = two_kernel_planted(2, 4, 0, 3);
  write_matrix(dir.path() / "d.mksm", data.train[0]);
  ASSERT_EQ(cli({"make-kernel", "--distances", (dir.path() / "d.mksm").string(), "--out",
                 (dir.path() / "k.mksm").string()}),
            0);
  EXPECT_EQ(read_matrix(dir.path() / "k.mksm"),
            kernel_from_distances(data.train[0], GammaPolicy::mean_inverse()).values);
}

TEST(Cli, SynthTrainEncodeEvaluate) {
  TempDir dir;
  const auto p = [&](const std::string& s) { return (dir.path() / s).string(); };
  ASSERT_EQ(cli({"synth", "--kind", "two-kernel-planted", "--out", p("data"), "--classes", "2", "--per-class", "8",
                 "--test-per-class", "4", "--seed", "1"}),
            0);
  std::ofstream(p("cfg.txt")) << "s_levels = 2\nk_atoms = 3\nd = 4\ntau = 3\ntau_prime = 4\n"
                                 "outer_rounds_max = 1\nalternation_rounds = 2\n";
  std::string text;
  ASSERT_EQ(cli({"train", "--manifest", p("data/manifest.json"), "--config", p("cfg.txt"), "--out", p("model")}, &text),
            0)
      << text;
  EXPECT_NE(text.find("repro: config_hash="), std::string::npos);
  ASSERT_EQ(cli({"encode", "--model", p("model"), "--cross", p("data/test_noise.mksm"), p("data/test_informative.mksm"),
                 "--out", p("test_codes.mksm")},
                &text),
            0)
      << text;
  EXPECT_EQ(read_matrix(p("test_codes.mksm")).cols(), 8);
  ASSERT_EQ(cli({"eval-classify", "--model", p("model"), "--train-labels", p("data/train_labels.txt"), "--test-codes",
                 p("test_codes.mksm"), "--test-labels", p("data/test_labels.txt")},
                &text),
            0)
      << text;
  EXPECT_NE(text.find("accuracy"), std::string::npos);
  EXPECT_EQ(cli({"inspect", "--model", p("model")}), 0);
  EXPECT_EQ(cli({"eval-cluster", "--model", p("model"), "--k", "2", "--truth", p("data/train_labels.txt")}, &text), 0)
      << text;
  EXPECT_EQ(cli({"encode", "--model", p("model"), "--cross", p("data/test_noise.mksm"), "--out", p("x.mksm")}), 2);
}
