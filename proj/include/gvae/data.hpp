#pragma once

#include "gvae/jets.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gvae {

struct Dataset {
  Matrix matrix;  // n x N, one row per sample
  std::vector<std::string> feature_names;
  std::vector<std::string> sample_ids;
  std::optional<std::vector<std::string>> labels;
  std::optional<std::vector<std::string>> groups;

  Eigen::Index size() const { return matrix.rows(); }
  Eigen::Index dim() const { return matrix.cols(); }
  void validate() const;
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

// Dataset with default names: x1..xN and row-index sample ids.
Dataset make_dataset(Matrix matrix);

enum class TableFormat { kCsv, kTsv };

struct LoadOptions {
  TableFormat format = TableFormat::kCsv;
  bool has_header = true;
  // Column names when has_header, zero-based indices otherwise.
  std::optional<std::string> label_column;
  std::optional<std::string> group_column;
  std::optional<std::string> id_column;
};

Dataset load_matrix(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_matrix(const std::string& text, const LoadOptions& options = {});

// Header: sample_id, features..., then label/group when present.
std::string dataset_csv(const Dataset& data);

enum class NormalizationScheme { kLog1pStandardize, kStandardize, kNone };
std::string to_string(NormalizationScheme s);
NormalizationScheme parse_normalization_scheme(const std::string& s);

// Per-feature (x' - shift) / scale, where x' is x or ln(1 + x).
struct NormalizationRecord {
  NormalizationScheme scheme = NormalizationScheme::kNone;
  Vector shift;
  Vector scale;
};

nlohmann::json normalization_to_json(const NormalizationRecord& r);
NormalizationRecord normalization_from_json(const nlohmann::json& j);

// Fits population (1/n) statistics; constant features get scale 1.
std::pair<Dataset, NormalizationRecord> normalize(const Dataset& data, NormalizationScheme scheme);
// Reuses a frozen record, never refits.
Dataset apply_normalization(const NormalizationRecord& record, const Dataset& data);
Matrix invert_normalization(const NormalizationRecord& record, const Matrix& normalized);

enum class SyntheticKind { kLinearSubspace, kSwissRoll, kCurvedSheetClusters, kSphere };
std::string to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string& s);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kLinearSubspace;
  int n = 1000;
  int ambient_dim = 50;
  int latent_dim = 2;      // linear_subspace
  int clusters = 6;        // curved_sheet_clusters; label bands for swiss_roll
  double radius = 1.0;     // sphere
  double curvature = 0.5;  // curved_sheet_clusters: height = curvature * (u^2 + v^2)
  double spread = 0.35;    // curved_sheet_clusters: cluster std in sheet coordinates
  double ring = 2.0;       // curved_sheet_clusters: cluster centers on this ring
  double scale = 1.0;      // swiss_roll coordinate scale
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Ground truth kept alongside generated samples for verification.
struct SyntheticData {
  Dataset data;
  Matrix frame;    // N x d orthonormal columns
  Vector offset;   // N
  Matrix latent;   // n x d intrinsic coordinates before embedding
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

enum class SplitMode { kRandomFraction, kHoldoutGroups };

struct SplitSpec {
  SplitMode mode = SplitMode::kRandomFraction;
  double fraction = 0.2;  // held-out share for random_fraction
  std::vector<std::string> groups;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset held_out;
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> held_out_rows;
};

SplitResult split(const Dataset& data, const SplitSpec& spec);

// Random n x d matrix with orthonormal columns.
template <class Rng>
Matrix random_orthonormal(int n, int d, Rng& rng);

}  // namespace gvae

#include <random>

namespace gvae {

template <class Rng>
Matrix random_orthonormal(int n, int d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, d);
}

}  // namespace gvae
