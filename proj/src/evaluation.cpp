#include "gvae/evaluation.hpp"

#include "gvae/error.hpp"
#include "gvae/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace gvae {

Embedding embed(const VaeModel& model, const Dataset& data, const NormalizationRecord& record) {
  if (data.dim() != model.data_dim())
    throw ShapeError("embed: data has " + std::to_string(data.dim()) + " features, model expects " +
                     std::to_string(model.data_dim()));
  const Dataset normalized = apply_normalization(record, data);
  Embedding e;
  e.points.resize(data.size(), model.latent_dim);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    e.points.row(i) = encoder_forward(model.encoder, normalized.matrix.row(i).transpose()).mean.transpose();
  e.sample_ids = data.sample_ids;
  e.labels = data.labels;
  e.groups = data.groups;
  return e;
}

std::string embedding_csv(const Embedding& e) {
  std::vector<std::string> header{"sample_id"};
  for (Eigen::Index k = 0; k < e.points.cols(); ++k) header.push_back("z" + std::to_string(k + 1));
  if (e.labels) header.push_back("label");
  if (e.groups) header.push_back("group");
  std::string out = join_csv(header) + "\n";
  for (Eigen::Index i = 0; i < e.points.rows(); ++i) {
    std::vector<std::string> cells{e.sample_ids[i]};
    for (Eigen::Index k = 0; k < e.points.cols(); ++k) cells.push_back(format_double(e.points(i, k)));
    if (e.labels) cells.push_back((*e.labels)[i]);
    if (e.groups) cells.push_back((*e.groups)[i]);
    out += join_csv(cells) + "\n";
  }
  return out;
}

Embedding parse_embedding_csv(const std::string& text) {
  const auto first_line = text.substr(0, text.find('\n'));
  LoadOptions opts;
  opts.id_column = "sample_id";
  if (first_line.find(",label") != std::string::npos) opts.label_column = "label";
  if (first_line.find(",group") != std::string::npos) opts.group_column = "group";
  Dataset d = parse_matrix(text, opts);
  for (Eigen::Index k = 0; k < d.dim(); ++k)
    if (d.feature_names[k] != "z" + std::to_string(k + 1))
      throw ParseError("embedding csv: expected column z" + std::to_string(k + 1));
  return {std::move(d.matrix), std::move(d.sample_ids), std::move(d.labels), std::move(d.groups)};
}

// ---------------------------------------------------------------------------
// PCA

PcaModel pca_fit(const Matrix& data, int k) {
  const auto n = data.rows();
  const auto dim = data.cols();
  if (k <= 0 || k > std::min(n, dim)) throw DomainError("pca_fit: k must satisfy 0 < k <= min(n, N)");
  PcaModel pca;
  pca.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - pca.mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  pca.components.resize(k, dim);
  pca.explained_variance.resize(k);
  for (int c = 0; c < k; ++c) {
    const auto col = dim - 1 - c;  // eigenvalues ascending
    Vector v = eig.eigenvectors().col(col);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    pca.components.row(c) = v.transpose();
    pca.explained_variance(c) = std::max(0.0, eig.eigenvalues()(col));
  }
  return pca;
}

Matrix pca_project(const PcaModel& pca, const Matrix& points) {
  if (points.cols() != pca.mean.size()) throw ShapeError("pca_project: dimension mismatch");
  return (points.rowwise() - pca.mean.transpose()) * pca.components.transpose();
}

Matrix pca_reconstruct(const PcaModel& pca, const Matrix& scores) {
  if (scores.cols() != pca.components.rows()) throw ShapeError("pca_reconstruct: dimension mismatch");
  return (scores * pca.components).rowwise() + pca.mean.transpose();
}

// ---------------------------------------------------------------------------
// Decoding

DecodedGrid decode_grid(const MlpModel& decoder, const Vector& lo, const Vector& hi, int resolution) {
  const auto m = decoder.input_dim();
  if (lo.size() != m || hi.size() != m) throw ShapeError("decode_grid: box does not match latent dim");
  if (resolution < 1) throw DomainError("decode_grid: resolution must be positive");
  if (!lo.allFinite() || !hi.allFinite()) throw DomainError("decode_grid: box must be finite");
  Eigen::Index count = 1;
  for (int k = 0; k < m; ++k) count *= resolution;
  DecodedGrid grid;
  grid.latent.resize(count, m);
  grid.decoded.resize(count, decoder.output_dim());
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  for (Eigen::Index p = 0; p < count; ++p) {
    Eigen::Index rem = p;
    for (int k = m - 1; k >= 0; --k) {
      idx[k] = static_cast<int>(rem % resolution);
      rem /= resolution;
    }
    for (int k = 0; k < m; ++k) {
      const double frac = resolution == 1 ? 0.5 : static_cast<double>(idx[k]) / (resolution - 1);
      grid.latent(p, k) = lo(k) + frac * (hi(k) - lo(k));
    }
    grid.decoded.row(p) = forward(decoder, grid.latent.row(p).transpose()).transpose();
  }
  return grid;
}

Matrix decode_path(const MlpModel& decoder, const Vector& z_start, const Vector& z_end, int steps) {
  if (steps < 2) throw DomainError("decode_path: need at least two steps");
  if (z_start.size() != decoder.input_dim() || z_end.size() != decoder.input_dim())
    throw ShapeError("decode_path: endpoints do not match latent dim");
  Matrix out(steps, decoder.output_dim());
  for (int s = 0; s < steps; ++s) {
    Vector z;
    if (s == 0)
      z = z_start;
    else if (s == steps - 1)
      z = z_end;
    else
      z = z_start + (static_cast<double>(s) / (steps - 1)) * (z_end - z_start);
    out.row(s) = forward(decoder, z).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distances and rank correlation

Vector pairwise_distances(const Matrix& points) {
  const auto n = points.rows();
  if (n < 2) throw DomainError("pairwise_distances: need at least two points");
  Vector out(n * (n - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out(k++) = (points.row(i) - points.row(j)).norm();
  return out;
}

Vector average_ranks(const Vector& v) {
  const auto n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&v](auto a, auto b) { return v(a) < v(b); });
  Vector ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) ranks(order[t]) = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) throw DomainError("spearman: need at least two values");
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const Vector da = ra.array() - ra.mean();
  const Vector db = rb.array() - rb.mean();
  const double va = da.squaredNorm();
  const double vb = db.squaredNorm();
  if (va == 0.0 || vb == 0.0) throw DomainError("spearman: undefined correlation (zero rank variance)");
  return da.dot(db) / std::sqrt(va * vb);
}

Vector holdout_distances(const Matrix& points, const std::vector<char>& held_out) {
  if (held_out.size() != static_cast<std::size_t>(points.rows()))
    throw ShapeError("holdout_distances: mask length does not match rows");
  std::vector<Eigen::Index> in, rest;
  for (Eigen::Index i = 0; i < points.rows(); ++i) (held_out[i] ? in : rest).push_back(i);
  Vector out(static_cast<Eigen::Index>(in.size() * rest.size()));
  Eigen::Index k = 0;
  for (auto i : in)
    for (auto j : rest) out(k++) = (points.row(i) - points.row(j)).norm();
  return out;
}

OodResult ood_consistency(const Embedding& full, const Embedding& holdout,
                          const std::vector<char>& held_out) {
  if (full.points.rows() != holdout.points.rows())
    throw ShapeError("ood_consistency: embeddings cover different sample counts");
  if (full.sample_ids != holdout.sample_ids)
    throw ShapeError("ood_consistency: embeddings list different samples");
  const auto held = std::count(held_out.begin(), held_out.end(), 1);
  if (held == 0 || held == static_cast<long>(held_out.size()))
    throw DomainError("ood_consistency: held-out set must be a proper nonempty subset");
  OodResult r;
  r.full_distances = holdout_distances(full.points, held_out);
  r.holdout_distances = holdout_distances(holdout.points, held_out);
  r.rho = spearman(r.full_distances, r.holdout_distances);
  return r;
}

OodResult ood_consistency(const Embedding& full, const Embedding& holdout,
                          const std::string& held_out_group) {
  if (!full.groups) throw DomainError("ood_consistency: embedding has no groups");
  std::vector<char> mask;
  for (const auto& g : *full.groups) mask.push_back(g == held_out_group ? 1 : 0);
  if (std::find(mask.begin(), mask.end(), 1) == mask.end())
    throw ShapeError("ood_consistency: group '" + held_out_group + "' has no samples");
  return ood_consistency(full, holdout, mask);
}

Matrix column_normalized_density(const Vector& x, const Vector& y, int bins) {
  if (x.size() != y.size()) throw ShapeError("density: length mismatch");
  if (bins < 1) throw DomainError("density: bins must be positive");
  const double x_max = x.size() ? x.maxCoeff() : 0.0;
  const double y_max = y.size() ? y.maxCoeff() : 0.0;
  auto bin_of = [bins](double v, double max) {
    if (max <= 0.0) return 0;
    return std::clamp(static_cast<int>(v / max * bins), 0, bins - 1);
  };
  Matrix counts = Matrix::Zero(bins, bins);
  for (Eigen::Index i = 0; i < x.size(); ++i) counts(bin_of(y(i), y_max), bin_of(x(i), x_max)) += 1.0;
  for (int c = 0; c < bins; ++c) {
    const double total = counts.col(c).sum();
    if (total > 0.0) counts.col(c) /= total;
  }
  return counts;
}

std::string density_csv(const Matrix& density) {
  std::string out = "row_bin,col_bin,density\n";
  for (Eigen::Index r = 0; r < density.rows(); ++r)
    for (Eigen::Index c = 0; c < density.cols(); ++c)
      out += std::to_string(r) + "," + std::to_string(c) + "," + format_double(density(r, c)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Linear discriminant

LdaModel lda_fit(const Matrix& points, const std::vector<std::string>& labels, double jitter_scale) {
  const auto n = points.rows();
  const auto m = points.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("lda_fit: label count mismatch");
  std::map<std::string, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw DomainError("lda_fit: need at least two classes");
  const auto k = static_cast<Eigen::Index>(members.size());

  LdaModel model;
  model.means.resize(k, m);
  model.log_priors.resize(k);
  Matrix scatter = Matrix::Zero(m, m);
  Eigen::Index c = 0;
  for (const auto& [name, rows] : members) {
    model.classes.push_back(name);
    Vector mu = Vector::Zero(m);
    for (auto r : rows) mu += points.row(r).transpose();
    mu /= static_cast<double>(rows.size());
    for (auto r : rows) {
      const Vector d = points.row(r).transpose() - mu;
      scatter.noalias() += d * d.transpose();
    }
    model.means.row(c) = mu.transpose();
    model.log_priors(c) = std::log(static_cast<double>(rows.size()) / static_cast<double>(n));
    ++c;
  }
  const double dof = static_cast<double>(std::max<Eigen::Index>(n - k, 1));
  Matrix pooled = scatter / dof;
  model.jitter_used = jitter_scale * pooled.trace() / static_cast<double>(m);
  pooled.diagonal().array() += model.jitter_used;
  Eigen::LLT<Matrix> llt(pooled);
  if (llt.info() != Eigen::Success) throw SingularGeometryError("lda_fit: pooled covariance is singular");
  model.covariance_inverse = llt.solve(Matrix::Identity(m, m));
  return model;
}

Matrix lda_scores(const LdaModel& model, const Matrix& points) {
  if (points.cols() != model.means.cols()) throw ShapeError("lda: dimension mismatch");
  const Matrix w = model.means * model.covariance_inverse;  // K x m
  Vector offsets(model.means.rows());
  for (Eigen::Index c = 0; c < model.means.rows(); ++c)
    offsets(c) = -0.5 * w.row(c).dot(model.means.row(c)) + model.log_priors(c);
  return (points * w.transpose()).rowwise() + offsets.transpose();
}

std::vector<std::string> lda_predict(const LdaModel& model, const Matrix& points) {
  const Matrix scores = lda_scores(model, points);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    out.push_back(model.classes[best]);
  }
  return out;
}

double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw DomainError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Vector signature_score(const Dataset& data, const std::vector<std::string>& features) {
  if (features.empty()) throw DomainError("signature_score: feature subset is empty");
  Vector score = Vector::Zero(data.size());
  for (const auto& f : features) {
    const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), f);
    if (it == data.feature_names.end()) throw ShapeError("signature_score: unknown feature '" + f + "'");
    score += data.matrix.col(it - data.feature_names.begin());
  }
  return score;
}

}  // namespace gvae
