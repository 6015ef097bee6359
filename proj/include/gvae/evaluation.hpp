#pragma once

#include "gvae/data.hpp"
#include "gvae/geometry.hpp"
#include "gvae/vae.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gvae {

struct Embedding {
  Matrix points;  // n x m encoder means
  std::vector<std::string> sample_ids;
  std::optional<std::vector<std::string>> labels;
  std::optional<std::vector<std::string>> groups;
};

// Encoder means of `data` after applying the frozen normalization record.
Embedding embed(const VaeModel& model, const Dataset& data, const NormalizationRecord& record);

// Header: sample_id,z1..zm[,label][,group]
std::string embedding_csv(const Embedding& e);
Embedding parse_embedding_csv(const std::string& text);

struct PcaModel {
  Vector mean;             // N
  Matrix components;       // k x N, orthonormal rows
  Vector explained_variance;  // k, nonincreasing
};

// Covariance eigendecomposition; each component's largest-magnitude entry is positive.
PcaModel pca_fit(const Matrix& data, int k);
Matrix pca_project(const PcaModel& pca, const Matrix& points);
Matrix pca_reconstruct(const PcaModel& pca, const Matrix& scores);

struct DecodedGrid {
  Matrix latent;   // resolution^m x m, last coordinate varies fastest
  Matrix decoded;  // resolution^m x N
};

// Regular lattice over [lo, hi] per latent axis.
DecodedGrid decode_grid(const MlpModel& decoder, const Vector& lo, const Vector& hi, int resolution);
Matrix decode_path(const MlpModel& decoder, const Vector& z_start, const Vector& z_end, int steps);

// Condensed Euclidean distances in (i < j) order.
Vector pairwise_distances(const Matrix& points);

// Pearson correlation of average ranks. Throws DomainError on zero rank variance.
double spearman(const Vector& a, const Vector& b);
Vector average_ranks(const Vector& v);

// Distances from held-out rows to every other row, flattened row-major as
// held_out_rows x rest_rows.
Vector holdout_distances(const Matrix& points, const std::vector<char>& held_out);

struct OodResult {
  double rho = 0.0;
  Vector full_distances;
  Vector holdout_distances;
};

// Both embeddings must list the same samples in the same order.
OodResult ood_consistency(const Embedding& full, const Embedding& holdout,
                          const std::vector<char>& held_out);
OodResult ood_consistency(const Embedding& full, const Embedding& holdout,
                          const std::string& held_out_group);

// bins x bins histogram over [0, max] of each axis; each column (x bin of
// `x`) normalized to sum 1. Entry (row, col) = density of y-bin row within x-bin col.
Matrix column_normalized_density(const Vector& x, const Vector& y, int bins = 50);
std::string density_csv(const Matrix& density);

struct LdaModel {
  std::vector<std::string> classes;  // sorted
  Matrix means;                      // K x m
  Matrix covariance_inverse;         // m x m, pooled and jittered
  Vector log_priors;
  double jitter_used = 0.0;
};

LdaModel lda_fit(const Matrix& points, const std::vector<std::string>& labels,
                 double jitter_scale = kDefaultJitterScale);
Matrix lda_scores(const LdaModel& model, const Matrix& points);
std::vector<std::string> lda_predict(const LdaModel& model, const Matrix& points);
double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth);

// Row sums over the named feature columns.
Vector signature_score(const Dataset& data, const std::vector<std::string>& features);

}  // namespace gvae
