#pragma once

// Matrix files, label files, manifests, training configs and model containers.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mksr/kernel.hpp"
#include "mksr/pipeline.hpp"

namespace mksr {

namespace fs = std::filesystem;

/// "MKSM" binary: magic, u32 version, u64 rows, u64 cols, row-major little-endian f64.
void write_matrix_binary(const fs::path& path, const MatrixXd& m);
MatrixXd read_matrix_binary(const fs::path& path);
/// Comma-separated rows at %.17g, so the round trip is exact.
void write_matrix_csv(const fs::path& path, const MatrixXd& m);
MatrixXd read_matrix_csv(const fs::path& path);
/// Dispatches on the extension when writing (.csv or binary) and on the magic when reading.
void write_matrix(const fs::path& path, const MatrixXd& m);
MatrixXd read_matrix(const fs::path& path);

std::string encode_matrix_binary(const MatrixXd& m);
MatrixXd decode_matrix_binary(const std::string& bytes, const std::string& what);

std::vector<int> read_labels(const fs::path& path);
void write_labels(const fs::path& path, const std::vector<int>& labels);

/// Writes to a sibling temporary file and renames it into place.
void atomic_write(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

/// FNV-1a of a byte string.
std::uint64_t checksum(const std::string& bytes);
std::string hex64(std::uint64_t v);

enum class MatrixRole { Distance, Kernel };

struct ManifestEntry {
  std::string path;
  MatrixRole role = MatrixRole::Distance;
  std::string source_id;
};

struct Manifest {
  std::string dataset;
  std::vector<ManifestEntry> matrices;
  std::string labels;  ///< empty when absent
  GammaPolicy gamma;
  bool normalize = true;
  fs::path base_dir;  ///< relative paths resolve against this

  fs::path resolve(const std::string& p) const;
};

Manifest load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const Manifest& m);

/// Reads every matrix of a manifest into an admitted (and optionally normalized) kernel set.
KernelSet<double> load_kernel_set(const Manifest& m);
KernelSet<double> build_kernel_set(const std::vector<MatrixXd>& matrices, const std::vector<std::string>& ids,
                                   MatrixRole role, GammaPolicy gamma, bool normalize);

/// Cross-kernel rows for new samples, using each training kernel's gamma and scale.
std::vector<MatrixXd> cross_kernel_rows(const std::vector<MatrixXd>& cross, MatrixRole role,
                                        const std::vector<double>& gammas, const std::vector<double>& scales);

/// Flat "key = value" config; '#' starts a comment; unknown keys are errors.
/// "preset = oxford" loads the bundled defaults at that point in the file.
TrainingConfig parse_config(const std::string& text);
TrainingConfig load_config(const fs::path& path);
std::string config_to_text(const TrainingConfig& cfg);
std::uint64_t config_hash(const TrainingConfig& cfg);

void save_model(const TrainedModel& m, const fs::path& dir);
TrainedModel load_model(const fs::path& dir);

}  // namespace mksr
