// gvae: command-line pipeline over the gamma_vae library.
//
// Every command computes its outputs in memory, then writes them (and a run
// manifest) at the end, so a failing command leaves no files behind.

#include "gvae/data.hpp"
#include "gvae/error.hpp"
#include "gvae/evaluation.hpp"
#include "gvae/geometry.hpp"
#include "gvae/io.hpp"
#include "gvae/parallel.hpp"
#include "gvae/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gvae;

namespace {

struct GlobalFlags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool verbose = false;
};

// Collects artifacts and writes them together with the manifest.
class Run {
 public:
  Run(std::string command, const GlobalFlags& flags)
      : command_(std::move(command)), flags_(flags), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& path) {
    if (!path.empty()) inputs_.push_back(path);
  }
  void stage(const fs::path& path, std::string contents) { files_.emplace_back(path, std::move(contents)); }
  void set_manifest_path(fs::path p) { manifest_ = std::move(p); }
  void set_seed(std::uint64_t s) { seed_ = s; }

  // Refuses to clobber existing files unless --force; called before any work.
  void claim(const std::vector<fs::path>& targets) const {
    if (flags_.force) return;
    for (const auto& t : targets)
      if (fs::exists(t)) throw ShapeError("output '" + t.string() + "' exists (use --force to overwrite)");
  }

  void commit(json extra = json::object()) {
    for (const auto& [path, _] : files_)
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::vector<std::string> outputs;
    for (const auto& [path, text] : files_) {
      write_text_atomic(path, text);
      outputs.push_back(path.string());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json manifest = {{"command", command_},
                     {"config", flags_.config.empty() ? json(nullptr) : json(flags_.config)},
                     {"inputs", inputs_},
                     {"outputs", outputs},
                     {"seed", seed_ ? json(*seed_) : json(nullptr)},
                     {"tool_version", GVAE_VERSION},
                     {"wall_clock_seconds", seconds}};
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    if (manifest_.has_parent_path()) fs::create_directories(manifest_.parent_path());
    write_text_atomic(manifest_, manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  const GlobalFlags& flags_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> inputs_;
  std::vector<std::pair<fs::path, std::string>> files_;
  fs::path manifest_;
  std::optional<std::uint64_t> seed_;
};

fs::path sidecar_manifest(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

void require_out(const GlobalFlags& g) {
  if (g.out.empty()) throw DomainError("--out is required");
}

struct TableFlags {
  std::string id_column;
  std::string label_column;
  std::string group_column;
};

// sample_id / label / group columns are picked up by name when present.
Dataset load_table(const std::string& path, const TableFlags& t) {
  if (path.empty()) throw DomainError("--data is required");
  const std::string text = read_text_file(path);
  LoadOptions opts;
  opts.format = fs::path(path).extension() == ".tsv" ? TableFormat::kTsv : TableFormat::kCsv;
  const char sep = opts.format == TableFormat::kCsv ? ',' : '\t';
  std::vector<std::string> header;
  {
    std::string line = text.substr(0, text.find('\n'));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string cell;
    for (char c : line) {
      if (c == sep) {
        header.push_back(cell);
        cell.clear();
      } else if (c != '"') {
        cell.push_back(c);
      }
    }
    header.push_back(cell);
  }
  auto pick = [&](const std::string& flag, const char* name) -> std::optional<std::string> {
    if (!flag.empty()) return flag;
    if (std::find(header.begin(), header.end(), name) != header.end()) return std::string(name);
    return std::nullopt;
  };
  opts.id_column = pick(t.id_column, "sample_id");
  opts.label_column = pick(t.label_column, "label");
  opts.group_column = pick(t.group_column, "group");
  try {
    return parse_matrix(text, opts);
  } catch (const ParseError& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

NormalizationRecord identity_record(Eigen::Index dim) {
  NormalizationRecord r;
  r.scheme = NormalizationScheme::kNone;
  r.shift = Vector::Zero(dim);
  r.scale = Vector::Ones(dim);
  return r;
}

// Explicit path, else normalization.json beside the checkpoint, else identity.
NormalizationRecord load_record(const std::string& explicit_path, const std::string& checkpoint,
                                Eigen::Index dim, Run& run) {
  fs::path p = explicit_path;
  if (p.empty()) {
    const fs::path beside = fs::path(checkpoint).parent_path() / "normalization.json";
    if (fs::exists(beside)) p = beside;
  }
  if (p.empty()) return identity_record(dim);
  run.input(p.string());
  return normalization_from_json(read_json_file(p));
}

std::string vector_csv_header(const char* prefix, Eigen::Index m) {
  std::string h;
  for (Eigen::Index k = 0; k < m; ++k) h += (k ? "," : "") + std::string(prefix) + std::to_string(k + 1);
  return h;
}

std::string row_csv(const Vector& v) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) s += (k ? "," : "") + format_double(v(k));
  return s;
}

// --------------------------------------------------------------------------
// gen

struct GenFlags {
  std::string kind = "linear_subspace";
  SyntheticSpec spec;
};

void cmd_gen(const GlobalFlags& g, GenFlags f) {
  require_out(g);
  Run run("gen", g);
  const fs::path out = g.out;
  run.set_manifest_path(sidecar_manifest(out));
  run.claim({out, sidecar_manifest(out)});
  f.spec.kind = parse_synthetic_kind(f.kind);
  if (g.seed) f.spec.seed = *g.seed;
  run.set_seed(f.spec.seed);
  const SyntheticData s = gen_synthetic(f.spec);
  run.stage(out, dataset_csv(s.data));
  run.commit({{"kind", f.kind}, {"n", f.spec.n}, {"ambient_dim", f.spec.ambient_dim}});
}

// --------------------------------------------------------------------------
// train

struct TrainFlags {
  TableFlags table;
  std::string normalize = "none";
  std::vector<std::string> exclude_groups;
  // flag values, applied over the config file only when given
  std::map<std::string, double> numbers;
  std::vector<int> encoder_hidden, decoder_hidden;
  CLI::App* app = nullptr;
};

const char* kNumericKeys[] = {"beta",       "gamma",      "delta",  "m_samples",  "sampler_scale",
                              "learning_rate", "adam_beta1", "adam_beta2", "epochs", "batch_size",
                              "jitter_scale", "latent_dim"};

TrainingConfig resolve_config(const GlobalFlags& g, const TrainFlags& f) {
  json j = json::object();
  if (!g.config.empty()) j = read_json_file(g.config);
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  TrainingConfig cfg = j.get<TrainingConfig>();
  for (const char* key : kNumericKeys) {
    if (f.app->count(std::string("--") + key) == 0) continue;
    const double v = f.numbers.at(key);
    json patch = cfg;
    if (std::string(key) == "m_samples" || std::string(key) == "epochs" ||
        std::string(key) == "batch_size" || std::string(key) == "latent_dim") {
      if (v != std::floor(v)) throw ParseError(std::string("--") + key + " must be an integer");
      patch[key] = static_cast<long long>(v);
    } else {
      patch[key] = v;
    }
    cfg = patch.get<TrainingConfig>();
  }
  if (f.app->count("--encoder_hidden")) cfg.encoder_hidden = f.encoder_hidden;
  if (f.app->count("--decoder_hidden")) cfg.decoder_hidden = f.decoder_hidden;
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

void cmd_train(const GlobalFlags& g, const TrainFlags& f) {
  require_out(g);
  Run run("train", g);
  const fs::path dir = g.out;
  const fs::path ckpt = dir / "checkpoint.json", norm = dir / "normalization.json",
                 metrics = dir / "metrics.csv", resolved = dir / "config.json",
                 manifest = dir / "manifest.json";
  run.set_manifest_path(manifest);
  run.claim({ckpt, norm, metrics, resolved, manifest});
  run.input(g.config);
  run.input(g.data);

  const TrainingConfig cfg = resolve_config(g, f);
  run.set_seed(cfg.seed);
  const NormalizationScheme scheme = parse_normalization_scheme(f.normalize);
  Dataset data = load_table(g.data, f.table);
  if (!f.exclude_groups.empty()) {
    SplitSpec spec;
    spec.mode = SplitMode::kHoldoutGroups;
    spec.groups = f.exclude_groups;
    data = split(data, spec).train;
  }
  const auto [normalized, record] = normalize(data, scheme);
  const TrainResult result = train(normalized.matrix, cfg, [&](const EpochMetrics& e) {
    if (g.verbose)
      std::cerr << "epoch " << e.epoch << " loss " << e.loss << " recon " << e.recon << " pe "
                << e.pe_mean << " ex " << e.ex_mean << "\n";
  });

  run.stage(ckpt, checkpoint_to_json(result.model).dump() + "\n");
  run.stage(norm, normalization_to_json(record).dump() + "\n");
  run.stage(metrics, metrics_csv(result.log));
  run.stage(resolved, json(cfg).dump(2) + "\n");
  run.commit({{"samples", data.size()}, {"excluded_groups", f.exclude_groups}});
}

// --------------------------------------------------------------------------
// embed

struct ModelFlags {
  std::string checkpoint;
  std::string normalization;
};

void cmd_embed(const GlobalFlags& g, const ModelFlags& m, const TableFlags& t) {
  require_out(g);
  Run run("embed", g);
  const fs::path out = g.out;
  run.set_manifest_path(sidecar_manifest(out));
  run.claim({out, sidecar_manifest(out)});
  run.input(m.checkpoint);
  run.input(g.data);
  const VaeModel model = load_checkpoint(m.checkpoint);
  const Dataset data = load_table(g.data, t);
  if (data.dim() != model.data_dim())
    throw ShapeError("data has " + std::to_string(data.dim()) + " features, checkpoint expects " +
                     std::to_string(model.data_dim()));
  const NormalizationRecord record = load_record(m.normalization, m.checkpoint, data.dim(), run);
  run.stage(out, embedding_csv(embed(model, data, record)));
  run.commit();
}

// --------------------------------------------------------------------------
// curvature

struct CurvatureFlags {
  std::vector<double> box;
  int resolution = 21;
  std::vector<double> origin;
  double jitter_scale = kDefaultJitterScale;
};

void cmd_curvature(const GlobalFlags& g, const ModelFlags& m, const CurvatureFlags& f) {
  require_out(g);
  Run run("curvature", g);
  const fs::path out = g.out;
  run.set_manifest_path(sidecar_manifest(out));
  run.claim({out, sidecar_manifest(out)});
  run.input(m.checkpoint);
  const VaeModel model = load_checkpoint(m.checkpoint);
  const int dim = model.latent_dim;
  require(f.box.size() == static_cast<std::size_t>(2 * dim),
          "--box needs lo,hi for each of the " + std::to_string(dim) + " latent axes");
  require(f.resolution >= 1, "--resolution must be positive");
  require(f.jitter_scale >= 0.0, "--jitter_scale must be >= 0");
  Vector lo(dim), hi(dim);
  for (int k = 0; k < dim; ++k) {
    lo(k) = f.box[2 * k];
    hi(k) = f.box[2 * k + 1];
  }
  const Vector origin = f.origin.empty() ? Vector::Zero(dim) : to_vector(f.origin);
  require(origin.size() == dim, "--origin must have latent_dim entries");

  const DecodedGrid grid = decode_grid(model.decoder, lo, hi, f.resolution);
  const Jet origin_jet = decoder_jet(model.decoder, origin);
  const auto count = static_cast<std::size_t>(grid.latent.rows());
  std::vector<std::string> rows(count);
  parallel_for(count, [&](std::size_t i) {
    const Vector z = grid.latent.row(static_cast<Eigen::Index>(i)).transpose();
    const Jet jet = decoder_jet(model.decoder, z);
    const GeometryAtPoint geo = geometry_at(jet, f.jitter_scale);
    const double angle = tangent_angles(origin_jet, jet).maxCoeff();
    rows[i] = row_csv(z) + "," + format_double(geo.pe_curvature) + "," +
              format_double(geo.ex_curvature) + "," + format_double(angle) + "\n";
  });
  std::string csv = vector_csv_header("z", dim) + ",pe,ex,max_tangent_angle\n";
  for (const auto& r : rows) csv += r;
  run.stage(out, std::move(csv));
  run.commit({{"resolution", f.resolution}, {"points", count}});
}

// --------------------------------------------------------------------------
// angles

struct AnglesFlags {
  std::vector<double> origin;
  int samples = 200;
  double radius = 2.0;
  double sampler_scale = 2.0;
};

void cmd_angles(const GlobalFlags& g, const ModelFlags& m, const TableFlags& t, const AnglesFlags& f) {
  require_out(g);
  Run run("angles", g);
  const fs::path out = g.out;
  run.set_manifest_path(sidecar_manifest(out));
  run.claim({out, sidecar_manifest(out)});
  run.input(m.checkpoint);
  require(f.samples > 0, "--samples must be positive");
  const VaeModel model = load_checkpoint(m.checkpoint);
  const int dim = model.latent_dim;
  const Vector origin = f.origin.empty() ? Vector::Zero(dim) : to_vector(f.origin);
  require(origin.size() == dim, "--origin must have latent_dim entries");
  const std::uint64_t seed = g.seed.value_or(0);
  run.set_seed(seed);
  Rng rng = make_stream(seed, Stream::kSampler);

  // Points come from the sampler over embedded data when --data is given,
  // otherwise uniformly from a cube of half-width --radius around the origin.
  Matrix points;
  if (!g.data.empty()) {
    run.input(g.data);
    const Dataset data = load_table(g.data, t);
    const NormalizationRecord record = load_record(m.normalization, m.checkpoint, data.dim(), run);
    points = sample_curvature_points(embed(model, data, record).points, f.samples, f.sampler_scale, rng);
  } else {
    std::uniform_real_distribution<double> u(-f.radius, f.radius);
    points.resize(f.samples, dim);
    for (int i = 0; i < f.samples; ++i)
      for (int k = 0; k < dim; ++k) points(i, k) = origin(k) + u(rng);
  }
  const Jet origin_jet = decoder_jet(model.decoder, origin);
  std::vector<std::string> rows(static_cast<std::size_t>(f.samples));
  parallel_for(rows.size(), [&](std::size_t i) {
    const Vector z = points.row(static_cast<Eigen::Index>(i)).transpose();
    const Vector angles = tangent_angles(origin_jet, decoder_jet(model.decoder, z));
    rows[i] = row_csv(z) + "," + format_double((z - origin).norm()) + "," + row_csv(angles) + "\n";
  });
  std::string csv = vector_csv_header("z", dim) + ",distance," + vector_csv_header("angle", dim) + "\n";
  for (const auto& r : rows) csv += r;
  run.stage(out, std::move(csv));
  run.commit({{"samples", f.samples}});
}

// --------------------------------------------------------------------------
// path

struct PathFlags {
  std::vector<double> z_start, z_end;
  int steps = 50;
  bool raw_units = false;
};

void cmd_path(const GlobalFlags& g, const ModelFlags& m, const PathFlags& f) {
  require_out(g);
  Run run("path", g);
  const fs::path out = g.out;
  run.set_manifest_path(sidecar_manifest(out));
  run.claim({out, sidecar_manifest(out)});
  run.input(m.checkpoint);
  const VaeModel model = load_checkpoint(m.checkpoint);
  require(f.z_start.size() == static_cast<std::size_t>(model.latent_dim) &&
              f.z_end.size() == static_cast<std::size_t>(model.latent_dim),
          "--z_start and --z_end must have latent_dim entries");
  require(f.steps >= 2, "--steps must be at least 2");
  Matrix decoded = decode_path(model.decoder, to_vector(f.z_start), to_vector(f.z_end), f.steps);
  if (f.raw_units) {
    const NormalizationRecord record = load_record(m.normalization, m.checkpoint, decoded.cols(), run);
    decoded = invert_normalization(record, decoded);
  }
  std::string csv = "step,t," + vector_csv_header("x", decoded.cols()) + "\n";
  for (int s = 0; s < f.steps; ++s)
    csv += std::to_string(s) + "," + format_double(static_cast<double>(s) / (f.steps - 1)) + "," +
           row_csv(decoded.row(s).transpose()) + "\n";
  run.stage(out, std::move(csv));
  run.commit({{"steps", f.steps}});
}

// --------------------------------------------------------------------------
// ood

struct OodFlags {
  std::string full_checkpoint, holdout_checkpoint;
  std::string full_normalization, holdout_normalization;
  std::string group;
  int bins = 50;
};

void cmd_ood(const GlobalFlags& g, const OodFlags& f, const TableFlags& t) {
  require_out(g);
  Run run("ood", g);
  const fs::path dir = g.out;
  const fs::path summary = dir / "ood.json", density = dir / "density.csv",
                 full_emb = dir / "full_embedding.csv", hold_emb = dir / "holdout_embedding.csv",
                 manifest = dir / "manifest.json";
  run.set_manifest_path(manifest);
  run.claim({summary, density, full_emb, hold_emb, manifest});
  require(!f.group.empty(), "--group is required");
  require(f.bins >= 1, "--bins must be positive");
  run.input(f.full_checkpoint);
  run.input(f.holdout_checkpoint);
  run.input(g.data);
  const VaeModel full = load_checkpoint(f.full_checkpoint);
  const VaeModel hold = load_checkpoint(f.holdout_checkpoint);
  const Dataset data = load_table(g.data, t);
  if (!data.groups) throw DomainError("ood needs a group column in --data");
  for (const VaeModel* model : {&full, &hold})
    if (data.dim() != model->data_dim())
      throw ShapeError("data has " + std::to_string(data.dim()) + " features, checkpoint expects " +
                       std::to_string(model->data_dim()));
  const Embedding ef = embed(full, data, load_record(f.full_normalization, f.full_checkpoint, data.dim(), run));
  const Embedding eh =
      embed(hold, data, load_record(f.holdout_normalization, f.holdout_checkpoint, data.dim(), run));
  const OodResult r = ood_consistency(ef, eh, f.group);
  const long held = std::count(data.groups->begin(), data.groups->end(), f.group);
  const json result = {{"group", f.group},
                       {"rho", r.rho},
                       {"held_out_samples", held},
                       {"rest_samples", data.size() - held},
                       {"distances", r.full_distances.size()}};
  run.stage(summary, result.dump(2) + "\n");
  run.stage(density, density_csv(column_normalized_density(r.full_distances, r.holdout_distances, f.bins)));
  run.stage(full_emb, embedding_csv(ef));
  run.stage(hold_emb, embedding_csv(eh));
  run.commit({{"rho", r.rho}});
  std::cout << result.dump() << "\n";
}

// --------------------------------------------------------------------------
// classify

struct ClassifyFlags {
  std::string embedding;
  std::string labels;
  double test_fraction = 0.0;
  double jitter_scale = kDefaultJitterScale;
};

void cmd_classify(const GlobalFlags& g, const ClassifyFlags& f) {
  require_out(g);
  Run run("classify", g);
  const fs::path dir = g.out;
  const fs::path summary = dir / "classification.json", preds = dir / "predictions.csv",
                 manifest = dir / "manifest.json";
  run.set_manifest_path(manifest);
  run.claim({summary, preds, manifest});
  require(f.test_fraction >= 0.0 && f.test_fraction < 1.0, "--test_fraction must lie in [0, 1)");
  if (f.embedding.empty()) throw DomainError("--embedding is required");
  run.input(f.embedding);
  Embedding e = parse_embedding_csv(read_text_file(f.embedding));

  std::vector<std::string> truth;
  if (!f.labels.empty()) {
    // sample_id,label table joined on sample id
    run.input(f.labels);
    LoadOptions opts;
    opts.id_column = "sample_id";
    opts.label_column = "label";
    const Dataset table = parse_matrix(read_text_file(f.labels), opts);
    std::map<std::string, std::string> by_id;
    for (Eigen::Index i = 0; i < table.size(); ++i) by_id[table.sample_ids[i]] = (*table.labels)[i];
    for (const auto& id : e.sample_ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw ShapeError("--labels has no entry for sample '" + id + "'");
      truth.push_back(it->second);
    }
  } else {
    if (!e.labels) throw DomainError("embedding has no label column; pass --labels");
    truth = *e.labels;
  }

  std::vector<Eigen::Index> train_rows, test_rows;
  const std::uint64_t seed = g.seed.value_or(0);
  run.set_seed(seed);
  if (f.test_fraction > 0.0) {
    Dataset index = make_dataset(Matrix::Zero(e.points.rows(), 1));
    SplitSpec spec;
    spec.fraction = f.test_fraction;
    spec.seed = seed;
    const SplitResult s = split(index, spec);
    train_rows = s.train_rows;
    test_rows = s.held_out_rows;
  } else {
    for (Eigen::Index i = 0; i < e.points.rows(); ++i) train_rows.push_back(i);
  }
  auto gather = [&](const std::vector<Eigen::Index>& rows, Matrix& x, std::vector<std::string>& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), e.points.cols());
    y.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = e.points.row(rows[i]);
      y.push_back(truth[rows[i]]);
    }
  };
  Matrix x_train, x_test;
  std::vector<std::string> y_train, y_test;
  gather(train_rows, x_train, y_train);
  gather(test_rows, x_test, y_test);
  const LdaModel lda = lda_fit(x_train, y_train, f.jitter_scale);
  const auto all_pred = lda_predict(lda, e.points);
  const double train_acc = accuracy(lda_predict(lda, x_train), y_train);
  json result = {{"classes", lda.classes},
                 {"train_samples", train_rows.size()},
                 {"test_samples", test_rows.size()},
                 {"train_accuracy", train_acc}};
  result["test_accuracy"] = test_rows.empty() ? json(nullptr) : json(accuracy(lda_predict(lda, x_test), y_test));

  std::vector<char> is_test(static_cast<std::size_t>(e.points.rows()), 0);
  for (auto r : test_rows) is_test[r] = 1;
  std::string csv = "sample_id,label,predicted,split\n";
  for (Eigen::Index i = 0; i < e.points.rows(); ++i)
    csv += join_csv({e.sample_ids[i], truth[i], all_pred[i], is_test[i] ? "test" : "train"}) + "\n";
  run.stage(summary, result.dump(2) + "\n");
  run.stage(preds, std::move(csv));
  run.commit();
  std::cout << result.dump() << "\n";
}

void print_error(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"code", code}, {"message", message}}.dump() << std::endl;
}

void add_globals(CLI::App* sub, GlobalFlags& g, bool data = true) {
  sub->add_option("--out", g.out, "output file or directory");
  sub->add_option("--seed", g.seed, "random seed");
  sub->add_flag("--force", g.force, "overwrite existing outputs");
  if (data) sub->add_option("--data", g.data, "input table (csv or tsv)");
}

void add_table(CLI::App* sub, TableFlags& t) {
  sub->add_option("--id_column,--id-column", t.id_column, "sample id column (default: sample_id if present)");
  sub->add_option("--label_column,--label-column", t.label_column, "label column (default: label if present)");
  sub->add_option("--group_column,--group-column", t.group_column, "group column (default: group if present)");
}

void add_model(CLI::App* sub, ModelFlags& m) {
  sub->add_option("--checkpoint", m.checkpoint, "checkpoint JSON")->required();
  sub->add_option("--normalization", m.normalization,
                  "normalization record (default: normalization.json beside the checkpoint)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature-regularized VAE toolkit"};
  app.set_version_flag("--version", std::string(GVAE_VERSION));
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_flag("-v,--verbose", g.verbose, "progress on stderr");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  add_globals(gen_cmd, g, false);
  gen_cmd->add_option("--kind", gen.kind, "linear_subspace | swiss_roll | curved_sheet_clusters | sphere")
      ->capture_default_str();
  gen_cmd->add_option("--n", gen.spec.n)->capture_default_str();
  gen_cmd->add_option("--ambient_dim,--ambient-dim", gen.spec.ambient_dim)->capture_default_str();
  gen_cmd->add_option("--latent_dim,--latent-dim", gen.spec.latent_dim)->capture_default_str();
  gen_cmd->add_option("--clusters", gen.spec.clusters)->capture_default_str();
  gen_cmd->add_option("--radius", gen.spec.radius)->capture_default_str();
  gen_cmd->add_option("--curvature", gen.spec.curvature)->capture_default_str();
  gen_cmd->add_option("--spread", gen.spec.spread)->capture_default_str();
  gen_cmd->add_option("--ring", gen.spec.ring)->capture_default_str();
  gen_cmd->add_option("--scale", gen.spec.scale)->capture_default_str();
  gen_cmd->add_option("--noise_sigma,--noise-sigma", gen.spec.noise_sigma)->capture_default_str();

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  tr.app = train_cmd;
  add_globals(train_cmd, g);
  add_table(train_cmd, tr.table);
  train_cmd->add_option("--config", g.config, "TrainingConfig JSON");
  train_cmd->add_option("--normalize", tr.normalize, "log1p_standardize | standardize | none")
      ->capture_default_str();
  train_cmd->add_option("--exclude_group,--exclude-group", tr.exclude_groups,
                        "drop samples of this group before training (repeatable)");
  for (const char* key : kNumericKeys) train_cmd->add_option(std::string("--") + key, tr.numbers[key]);
  train_cmd->add_option("--encoder_hidden", tr.encoder_hidden)->delimiter(',');
  train_cmd->add_option("--decoder_hidden", tr.decoder_hidden)->delimiter(',');

  ModelFlags model;
  TableFlags table;
  auto* embed_cmd = app.add_subcommand("embed", "encoder means for a table");
  add_globals(embed_cmd, g);
  add_model(embed_cmd, model);
  add_table(embed_cmd, table);

  CurvatureFlags curv;
  auto* curv_cmd = app.add_subcommand("curvature", "curvature map over a latent grid");
  add_globals(curv_cmd, g, false);
  add_model(curv_cmd, model);
  curv_cmd->add_option("--box", curv.box, "lo1,hi1,lo2,hi2,...")->delimiter(',')->required();
  curv_cmd->add_option("--resolution", curv.resolution)->capture_default_str();
  curv_cmd->add_option("--origin", curv.origin, "reference point for tangent angles")->delimiter(',');
  curv_cmd->add_option("--jitter_scale,--jitter-scale", curv.jitter_scale)->capture_default_str();

  AnglesFlags ang;
  auto* ang_cmd = app.add_subcommand("angles", "principal angles to the tangent space at an origin");
  add_globals(ang_cmd, g);
  add_model(ang_cmd, model);
  add_table(ang_cmd, table);
  ang_cmd->add_option("--origin", ang.origin)->delimiter(',');
  ang_cmd->add_option("--samples", ang.samples)->capture_default_str();
  ang_cmd->add_option("--radius", ang.radius, "half-width of the sampling cube without --data")
      ->capture_default_str();
  ang_cmd->add_option("--sampler_scale,--sampler-scale", ang.sampler_scale)->capture_default_str();

  PathFlags path;
  auto* path_cmd = app.add_subcommand("path", "decode a latent segment");
  add_globals(path_cmd, g, false);
  add_model(path_cmd, model);
  path_cmd->add_option("--z_start,--z-start", path.z_start)->delimiter(',')->required();
  path_cmd->add_option("--z_end,--z-end", path.z_end)->delimiter(',')->required();
  path_cmd->add_option("--steps,-K", path.steps)->capture_default_str();
  path_cmd->add_flag("--raw_units,--raw-units", path.raw_units, "undo the normalization record");

  OodFlags ood;
  auto* ood_cmd = app.add_subcommand("ood", "re-embedding consistency for a held-out group");
  add_globals(ood_cmd, g);
  add_table(ood_cmd, table);
  ood_cmd->add_option("--full_checkpoint,--full-checkpoint", ood.full_checkpoint)->required();
  ood_cmd->add_option("--holdout_checkpoint,--holdout-checkpoint", ood.holdout_checkpoint)->required();
  ood_cmd->add_option("--full_normalization", ood.full_normalization);
  ood_cmd->add_option("--holdout_normalization", ood.holdout_normalization);
  ood_cmd->add_option("--group", ood.group)->required();
  ood_cmd->add_option("--bins", ood.bins)->capture_default_str();

  ClassifyFlags cls;
  auto* cls_cmd = app.add_subcommand("classify", "linear discriminant on an embedding");
  add_globals(cls_cmd, g, false);
  cls_cmd->add_option("--embedding", cls.embedding)->required();
  cls_cmd->add_option("--labels", cls.labels, "sample_id,label table (default: embedding labels)");
  cls_cmd->add_option("--test_fraction,--test-fraction", cls.test_fraction)->capture_default_str();
  cls_cmd->add_option("--jitter_scale,--jitter-scale", cls.jitter_scale)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(static_cast<int>(ErrorCode::kParse), "parse", e.what());
    return static_cast<int>(ErrorCode::kParse);
  }

  try {
    if (*gen_cmd) cmd_gen(g, gen);
    else if (*train_cmd) cmd_train(g, tr);
    else if (*embed_cmd) cmd_embed(g, model, table);
    else if (*curv_cmd) cmd_curvature(g, model, curv);
    else if (*ang_cmd) cmd_angles(g, model, table, ang);
    else if (*path_cmd) cmd_path(g, model, path);
    else if (*ood_cmd) cmd_ood(g, ood, table);
    else if (*cls_cmd) cmd_classify(g, cls);
  } catch (const Error& e) {
    print_error(static_cast<int>(e.code()), e.kind(), e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    print_error(static_cast<int>(ErrorCode::kShape), "io", e.what());
    return static_cast<int>(ErrorCode::kShape);
  } catch (const std::exception& e) {
    print_error(1, "internal", e.what());
    return 1;
  }
  return 0;
}
