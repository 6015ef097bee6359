#include "gvae/data.hpp"

#include "gvae/error.hpp"
#include "gvae/io.hpp"
#include "gvae/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace gvae {

using nlohmann::json;

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(matrix.rows());
  if (feature_names.size() != static_cast<std::size_t>(matrix.cols()))
    throw ShapeError("dataset: feature name count does not match columns");
  if (sample_ids.size() != n) throw ShapeError("dataset: sample id count does not match rows");
  if (labels && labels->size() != n) throw ShapeError("dataset: label count does not match rows");
  if (groups && groups->size() != n) throw ShapeError("dataset: group count does not match rows");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.matrix.resize(static_cast<Eigen::Index>(rows.size()), matrix.cols());
  out.feature_names = feature_names;
  if (labels) out.labels.emplace();
  if (groups) out.groups.emplace();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    out.matrix.row(static_cast<Eigen::Index>(i)) = matrix.row(r);
    out.sample_ids.push_back(sample_ids[r]);
    if (labels) out.labels->push_back((*labels)[r]);
    if (groups) out.groups->push_back((*groups)[r]);
  }
  return out;
}

Dataset make_dataset(Matrix matrix) {
  Dataset d;
  for (Eigen::Index j = 0; j < matrix.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) d.sample_ids.push_back(std::to_string(i));
  d.matrix = std::move(matrix);
  return d;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == sep && !quoted) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::string where(std::size_t line, std::size_t column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

Dataset parse_matrix(const std::string& text, const LoadOptions& options) {
  const char sep = options.format == TableFormat::kCsv ? ',' : '\t';
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line == "\r") continue;
    auto cells = split_line(line, sep);
    if (options.has_header && header.empty()) {
      header = std::move(cells);
      for (auto& h : header) h = trim(h);
      continue;
    }
    const std::size_t width = header.empty() ? (rows.empty() ? cells.size() : rows.front().size())
                                             : header.size();
    if (cells.size() != width) {
      throw ParseError("ragged row at " + where(line_no, cells.size()) + ": expected " +
                       std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
    row_lines.push_back(line_no);
  }
  if (options.has_header && header.empty()) throw ParseError("table has no header line");
  const std::size_t width = header.empty() ? (rows.empty() ? 0 : rows.front().size()) : header.size();

  auto resolve = [&](const std::optional<std::string>& col) -> std::optional<std::size_t> {
    if (!col) return std::nullopt;
    if (options.has_header) {
      const auto it = std::find(header.begin(), header.end(), *col);
      if (it == header.end()) throw ParseError("missing column '" + *col + "'");
      return static_cast<std::size_t>(it - header.begin());
    }
    std::size_t idx = 0;
    auto [p, ec] = std::from_chars(col->data(), col->data() + col->size(), idx);
    if (ec != std::errc() || p != col->data() + col->size() || idx >= width)
      throw ParseError("missing column index '" + *col + "'");
    return idx;
  };
  const auto label_idx = resolve(options.label_column);
  const auto group_idx = resolve(options.group_column);
  const auto id_idx = resolve(options.id_column);

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < width; ++c)
    if (c != label_idx && c != group_idx && c != id_idx) feature_cols.push_back(c);

  Dataset d;
  d.matrix.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
  for (std::size_t k = 0; k < feature_cols.size(); ++k)
    d.feature_names.push_back(options.has_header ? header[feature_cols[k]] : "x" + std::to_string(k + 1));
  if (label_idx) d.labels.emplace();
  if (group_idx) d.groups.emplace();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v;
      if (!parse_double(rows[r][feature_cols[k]], v))
        throw ParseError("non-numeric cell '" + rows[r][feature_cols[k]] + "' at " +
                         where(row_lines[r], feature_cols[k] + 1));
      d.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
    }
    if (label_idx) d.labels->push_back(trim(rows[r][*label_idx]));
    if (group_idx) d.groups->push_back(trim(rows[r][*group_idx]));
    d.sample_ids.push_back(id_idx ? trim(rows[r][*id_idx]) : std::to_string(r));
  }
  return d;
}

Dataset load_matrix(const std::filesystem::path& path, const LoadOptions& options) {
  try {
    return parse_matrix(read_text_file(path), options);
  } catch (const ParseError& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

std::string dataset_csv(const Dataset& data) {
  data.validate();
  std::vector<std::string> header{"sample_id"};
  header.insert(header.end(), data.feature_names.begin(), data.feature_names.end());
  if (data.labels) header.push_back("label");
  if (data.groups) header.push_back("group");
  std::string out = join_csv(header) + "\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::vector<std::string> cells{data.sample_ids[i]};
    for (Eigen::Index j = 0; j < data.dim(); ++j) cells.push_back(format_double(data.matrix(i, j)));
    if (data.labels) cells.push_back((*data.labels)[i]);
    if (data.groups) cells.push_back((*data.groups)[i]);
    out += join_csv(cells) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

std::string to_string(NormalizationScheme s) {
  switch (s) {
    case NormalizationScheme::kLog1pStandardize: return "log1p_standardize";
    case NormalizationScheme::kStandardize: return "standardize";
    case NormalizationScheme::kNone: return "none";
  }
  return "none";
}

NormalizationScheme parse_normalization_scheme(const std::string& s) {
  if (s == "log1p_standardize") return NormalizationScheme::kLog1pStandardize;
  if (s == "standardize") return NormalizationScheme::kStandardize;
  if (s == "none") return NormalizationScheme::kNone;
  throw ParseError("unknown normalization scheme '" + s + "'");
}

json normalization_to_json(const NormalizationRecord& r) {
  return {{"scheme", to_string(r.scheme)},
          {"shift", std::vector<double>(r.shift.data(), r.shift.data() + r.shift.size())},
          {"scale", std::vector<double>(r.scale.data(), r.scale.data() + r.scale.size())}};
}

NormalizationRecord normalization_from_json(const json& j) {
  try {
    NormalizationRecord r;
    r.scheme = parse_normalization_scheme(j.at("scheme").get<std::string>());
    const auto shift = j.at("shift").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    if (shift.size() != scale.size()) throw ParseError("normalization: shift/scale length mismatch");
    r.shift = Eigen::Map<const Vector>(shift.data(), static_cast<Eigen::Index>(shift.size()));
    r.scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("normalization: ") + e.what());
  }
}

namespace {

Matrix pre_transform(NormalizationScheme scheme, const Matrix& x) {
  if (scheme != NormalizationScheme::kLog1pStandardize) return x;
  if ((x.array() < 0.0).any()) throw DomainError("log1p normalization requires nonnegative values");
  return x.unaryExpr([](double v) { return std::log1p(v); });
}

}  // namespace

std::pair<Dataset, NormalizationRecord> normalize(const Dataset& data, NormalizationScheme scheme) {
  NormalizationRecord record;
  record.scheme = scheme;
  const auto n = data.size();
  const auto dim = data.dim();
  record.shift = Vector::Zero(dim);
  record.scale = Vector::Ones(dim);
  if (scheme != NormalizationScheme::kNone) {
    if (n == 0) throw DomainError("normalize: empty dataset");
    const Matrix x = pre_transform(scheme, data.matrix);
    record.shift = x.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double var = (x.col(j).array() - record.shift(j)).square().sum() / static_cast<double>(n);
      const double sd = std::sqrt(var);
      record.scale(j) = sd > 0.0 ? sd : 1.0;
    }
  }
  return {apply_normalization(record, data), record};
}

Dataset apply_normalization(const NormalizationRecord& record, const Dataset& data) {
  if (record.shift.size() != data.dim() || record.scale.size() != data.dim())
    throw ShapeError("normalization record has " + std::to_string(record.shift.size()) +
                     " features, data has " + std::to_string(data.dim()));
  Dataset out = data;
  if (record.scheme == NormalizationScheme::kNone) return out;
  const Matrix x = pre_transform(record.scheme, data.matrix);
  out.matrix = (x.rowwise() - record.shift.transpose()).array().rowwise() /
               record.scale.transpose().array();
  if (!out.matrix.allFinite()) throw DomainError("normalization produced non-finite values");
  return out;
}

Matrix invert_normalization(const NormalizationRecord& record, const Matrix& normalized) {
  if (record.scheme == NormalizationScheme::kNone) return normalized;
  Matrix x = (normalized.array().rowwise() * record.scale.transpose().array()).matrix().rowwise() +
             record.shift.transpose();
  if (record.scheme == NormalizationScheme::kLog1pStandardize)
    x = x.unaryExpr([](double v) { return std::expm1(v); });
  return x;
}

// ---------------------------------------------------------------------------
// Synthetic manifolds

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kLinearSubspace: return "linear_subspace";
    case SyntheticKind::kSwissRoll: return "swiss_roll";
    case SyntheticKind::kCurvedSheetClusters: return "curved_sheet_clusters";
    case SyntheticKind::kSphere: return "sphere";
  }
  return "linear_subspace";
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "linear_subspace") return SyntheticKind::kLinearSubspace;
  if (s == "swiss_roll") return SyntheticKind::kSwissRoll;
  if (s == "curved_sheet_clusters") return SyntheticKind::kCurvedSheetClusters;
  if (s == "sphere") return SyntheticKind::kSphere;
  throw ParseError("unknown synthetic kind '" + s + "'");
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n <= 0) throw DomainError("gen_synthetic: n must be positive");
  if (spec.noise_sigma < 0.0) throw DomainError("gen_synthetic: noise_sigma must be >= 0");
  Rng rng = make_stream(spec.seed, Stream::kData);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  int intrinsic = 3;
  switch (spec.kind) {
    case SyntheticKind::kLinearSubspace:
      if (spec.latent_dim <= 0 || spec.latent_dim > spec.ambient_dim)
        throw DomainError("linear_subspace requires 0 < latent_dim <= ambient_dim");
      intrinsic = spec.latent_dim;
      break;
    case SyntheticKind::kCurvedSheetClusters:
      if (spec.clusters <= 0) throw DomainError("curved_sheet_clusters requires clusters > 0");
      [[fallthrough]];
    case SyntheticKind::kSwissRoll:
    case SyntheticKind::kSphere:
      if (spec.ambient_dim < 3) throw DomainError(to_string(spec.kind) + " requires ambient_dim >= 3");
      break;
  }
  if (spec.kind == SyntheticKind::kSphere && !(spec.radius > 0.0))
    throw DomainError("sphere requires radius > 0");
  if (spec.kind == SyntheticKind::kSwissRoll && spec.clusters <= 0)
    throw DomainError("swiss_roll requires clusters > 0 label bands");

  SyntheticData out;
  out.frame = random_orthonormal(spec.ambient_dim, intrinsic, rng);
  out.offset = Vector::Zero(spec.ambient_dim);
  if (spec.kind == SyntheticKind::kLinearSubspace || spec.kind == SyntheticKind::kSphere)
    for (int j = 0; j < spec.ambient_dim; ++j) out.offset(j) = normal(rng);

  Matrix embedded(spec.n, intrinsic);  // intrinsic ambient coordinates before the frame
  std::vector<std::string> labels;
  std::vector<std::string> groups;
  switch (spec.kind) {
    case SyntheticKind::kLinearSubspace: {
      out.latent.resize(spec.n, intrinsic);
      for (int i = 0; i < spec.n; ++i)
        for (int k = 0; k < intrinsic; ++k) out.latent(i, k) = normal(rng);
      embedded = out.latent;
      break;
    }
    case SyntheticKind::kSwissRoll: {
      constexpr double kPi = std::numbers::pi;
      const double t_lo = 1.5 * kPi, t_hi = 4.5 * kPi, height = 21.0;
      out.latent.resize(spec.n, 2);
      for (int i = 0; i < spec.n; ++i) {
        const double t = t_lo + (t_hi - t_lo) * uniform(rng);
        const double h = height * uniform(rng);
        out.latent(i, 0) = t;
        out.latent(i, 1) = h;
        embedded.row(i) << spec.scale * t * std::cos(t), spec.scale * h, spec.scale * t * std::sin(t);
        const int band = std::min(spec.clusters - 1,
                                  static_cast<int>((t - t_lo) / (t_hi - t_lo) * spec.clusters));
        labels.push_back("band" + std::to_string(band));
      }
      break;
    }
    case SyntheticKind::kCurvedSheetClusters: {
      out.latent.resize(spec.n, 2);
      for (int i = 0; i < spec.n; ++i) {
        const int c = i % spec.clusters;
        const double angle = 2.0 * std::numbers::pi * c / spec.clusters;
        const double u = spec.ring * std::cos(angle) + spec.spread * normal(rng);
        const double v = spec.ring * std::sin(angle) + spec.spread * normal(rng);
        out.latent(i, 0) = u;
        out.latent(i, 1) = v;
        embedded.row(i) << u, v, spec.curvature * (u * u + v * v);
        labels.push_back("c" + std::to_string(c));
      }
      groups = labels;
      break;
    }
    case SyntheticKind::kSphere: {
      out.latent.resize(spec.n, 3);
      for (int i = 0; i < spec.n; ++i) {
        Eigen::Vector3d p(normal(rng), normal(rng), normal(rng));
        while (p.norm() == 0.0) p = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
        p *= spec.radius / p.norm();
        out.latent.row(i) = p.transpose();
        embedded.row(i) = p.transpose();
      }
      break;
    }
  }

  Matrix x = (embedded * out.frame.transpose()).rowwise() + out.offset.transpose();
  if (spec.noise_sigma > 0.0)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) += spec.noise_sigma * normal(rng);

  out.data = make_dataset(std::move(x));
  if (!labels.empty()) out.data.labels = std::move(labels);
  if (!groups.empty()) out.data.groups = std::move(groups);
  return out;
}

// ---------------------------------------------------------------------------
// Splits

SplitResult split(const Dataset& data, const SplitSpec& spec) {
  const auto n = data.size();
  std::vector<char> held(static_cast<std::size_t>(n), 0);
  if (spec.mode == SplitMode::kHoldoutGroups) {
    if (!data.groups) throw DomainError("holdout split requires group tags");
    if (spec.groups.empty()) throw DomainError("holdout split requires at least one group");
    const std::set<std::string> wanted(spec.groups.begin(), spec.groups.end());
    const std::set<std::string> present(data.groups->begin(), data.groups->end());
    for (const auto& g : wanted)
      if (!present.count(g)) throw DomainError("holdout group '" + g + "' not present in dataset");
    for (Eigen::Index i = 0; i < n; ++i) held[i] = wanted.count((*data.groups)[i]) ? 1 : 0;
  } else {
    if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
      throw DomainError("split fraction must lie in (0, 1)");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_stream(spec.seed, Stream::kSplit);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n_held; ++k) held[order[k]] = 1;
  }
  SplitResult out;
  for (Eigen::Index i = 0; i < n; ++i) (held[i] ? out.held_out_rows : out.train_rows).push_back(i);
  if (out.train_rows.empty()) throw DomainError("degenerate split: train side is empty");
  out.train = data.subset(out.train_rows);
  out.held_out = data.subset(out.held_out_rows);
  return out;
}

}  // namespace gvae
