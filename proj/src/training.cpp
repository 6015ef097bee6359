#include "gvae/training.hpp"

#include "gvae/error.hpp"
#include "gvae/io.hpp"
#include "gvae/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace gvae {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainingConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("config: ") + what);
  };
  require(beta >= 0.0 && gamma >= 0.0 && delta >= 0.0, "beta, gamma, delta must be >= 0");
  require(m_samples > 0, "m_samples must be positive");
  require(sampler_scale >= 0.0, "sampler_scale must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          "adam decay rates must lie in [0, 1)");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size > 0, "batch_size must be positive");
  require(jitter_scale >= 0.0, "jitter_scale must be >= 0");
  require(latent_dim > 0, "latent_dim must be positive");
  for (int h : encoder_hidden) require(h > 0, "encoder_hidden sizes must be positive");
  for (int h : decoder_hidden) require(h > 0, "decoder_hidden sizes must be positive");
}

void to_json(json& j, const TrainingConfig& c) {
  j = json{{"beta", c.beta},
           {"gamma", c.gamma},
           {"delta", c.delta},
           {"m_samples", c.m_samples},
           {"sampler_scale", c.sampler_scale},
           {"learning_rate", c.learning_rate},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"jitter_scale", c.jitter_scale},
           {"latent_dim", c.latent_dim},
           {"encoder_hidden", c.encoder_hidden},
           {"decoder_hidden", c.decoder_hidden}};
}

void from_json(const json& j, TrainingConfig& c) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  static const std::set<std::string> known = {
      "beta",       "gamma",       "delta",   "m_samples",    "sampler_scale",
      "learning_rate", "adam_beta1", "adam_beta2", "epochs",  "batch_size",
      "seed",       "jitter_scale", "latent_dim", "encoder_hidden", "decoder_hidden"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ParseError("config: unknown key '" + key + "'");
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("beta", c.beta);
    get("gamma", c.gamma);
    get("delta", c.delta);
    get("m_samples", c.m_samples);
    get("sampler_scale", c.sampler_scale);
    get("learning_rate", c.learning_rate);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("jitter_scale", c.jitter_scale);
    get("latent_dim", c.latent_dim);
    get("encoder_hidden", c.encoder_hidden);
    get("decoder_hidden", c.decoder_hidden);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

VaeModel init_vae(int data_dim, const TrainingConfig& config) {
  config.validate();
  Rng rng = make_stream(config.seed, Stream::kInit);
  std::vector<int> enc{data_dim};
  enc.insert(enc.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  enc.push_back(2 * config.latent_dim);
  std::vector<int> dec{config.latent_dim};
  dec.insert(dec.end(), config.decoder_hidden.begin(), config.decoder_hidden.end());
  dec.push_back(data_dim);
  VaeModel model;
  model.latent_dim = config.latent_dim;
  model.encoder = init_mlp(enc, Role::kEncoder, rng);
  model.decoder = init_mlp(dec, Role::kDecoder, rng);
  return model;
}

// ---------------------------------------------------------------------------
// Elementary terms

double kl_divergence(const Vector& mean, const Vector& logvar) {
  if (mean.size() != logvar.size()) throw ShapeError("kl_divergence: length mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    sum += mean(i) * mean(i) + std::exp(logvar(i)) - 1.0 - logvar(i);
  return 0.5 * sum;
}

Vector reparameterize(const Vector& mean, const Vector& logvar, const Vector& noise) {
  if (mean.size() != logvar.size() || mean.size() != noise.size())
    throw ShapeError("reparameterize: length mismatch");
  return mean.array() + (0.5 * logvar.array()).exp() * noise.array();
}

double reconstruction_loss(const Vector& x, const Vector& x_hat) {
  if (x.size() != x_hat.size()) throw ShapeError("reconstruction_loss: length mismatch");
  return (x - x_hat).squaredNorm();
}

Matrix sample_curvature_points(const Matrix& latent_means, int m_samples, double sampler_scale,
                               Rng& rng) {
  const auto n = latent_means.rows();
  const auto m = latent_means.cols();
  if (n < 2) throw DomainError("sample_curvature_points: need at least two latent points");
  const Vector center = latent_means.colwise().mean().transpose();
  const Matrix centered = latent_means.rowwise() - center.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector half_widths =
      sampler_scale * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix frame = eig.eigenvectors() * half_widths.asDiagonal();
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Matrix points(m_samples, m);
  Vector u(m);
  for (int i = 0; i < m_samples; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) u(k) = uniform(rng);
    points.row(i) = (center + frame * u).transpose();
  }
  return points;
}

// ---------------------------------------------------------------------------
// Batched MLP passes (columns are samples)

namespace {

struct BatchTape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
  std::vector<bool> activated;
  Matrix output;
};

double logistic(double x) { return softplus_jet(x).first; }

BatchTape batch_forward(const MlpModel& model, const Matrix& x) {
  BatchTape tape;
  Matrix h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix pre = layer.weight * h;
    pre.colwise() += layer.bias;
    const bool act = l + 1 < model.layers.size() && model.hidden_activation == Activation::kSoftplus;
    Matrix next = act ? Matrix(pre.unaryExpr([](double v) { return softplus_jet(v).value; })) : pre;
    tape.inputs.push_back(std::move(h));
    tape.preacts.push_back(std::move(pre));
    tape.activated.push_back(act);
    h = std::move(next);
  }
  tape.output = std::move(h);
  return tape;
}

// Accumulates parameter gradients; returns the gradient w.r.t. the input.
Matrix batch_backward(const MlpModel& model, const BatchTape& tape, Matrix bar, LayerGrads& grads,
                      bool need_input_bar) {
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    if (tape.activated[l]) bar.array() *= tape.preacts[l].unaryExpr(&logistic).array();
    grads[l].weight.noalias() += bar * tape.inputs[l].transpose();
    grads[l].bias += bar.rowwise().sum();
    if (l > 0 || need_input_bar) bar = model.layers[l].weight.transpose() * bar;
  }
  return bar;
}

using PointSampler = std::function<Matrix(const Matrix& batch_means)>;

void check_finite(double value, const char* term) {
  if (!std::isfinite(value))
    throw DivergedTrainingError(std::string("non-finite ") + term + " term in loss");
}

LossAndGradient evaluate(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                         const PointSampler& sampler, const TrainingConfig& config,
                         const TermMask& mask, bool want_gradient) {
  const auto batch_size = batch.rows();
  const auto m = model.latent_dim;
  if (batch.cols() != model.data_dim())
    throw ShapeError("loss: batch feature count " + std::to_string(batch.cols()) +
                     " does not match model input " + std::to_string(model.data_dim()));
  if (noise.rows() != batch_size || noise.cols() != m)
    throw ShapeError("loss: noise must be B x latent_dim");
  if (batch_size == 0) throw ShapeError("loss: empty batch");

  const double inv_b = 1.0 / static_cast<double>(batch_size);
  const double w_recon = mask.reconstruction ? 1.0 : 0.0;
  const double w_kl = mask.kl ? config.beta : 0.0;
  const double w_pe = mask.pe ? config.gamma : 0.0;
  const double w_ex = mask.ex ? config.delta : 0.0;

  LossAndGradient out;
  LossBreakdown& loss = out.loss;

  // ELBO part.
  const Matrix x = batch.transpose();
  const BatchTape enc = batch_forward(model.encoder, x);
  const Matrix means = enc.output.topRows(m);
  const Matrix logvars = enc.output.bottomRows(m);
  const Matrix sigmas = (0.5 * logvars.array()).exp().matrix();
  const Matrix eps = noise.transpose();
  const Matrix z = means.array() + sigmas.array() * eps.array();
  const BatchTape dec = batch_forward(model.decoder, z);
  const Matrix diff = dec.output - x;

  double recon_sum = 0.0;
  double kl_sum = 0.0;
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    recon_sum += diff.col(i).squaredNorm();
    kl_sum += kl_divergence(means.col(i), logvars.col(i));
  }
  loss.reconstruction = recon_sum * inv_b;
  loss.kl = kl_sum * inv_b;
  check_finite(loss.reconstruction, "reconstruction");
  check_finite(loss.kl, "kl");

  if (want_gradient) {
    out.gradient.encoder = zeros_like(model.encoder);
    out.gradient.decoder = zeros_like(model.decoder);
    if (w_recon != 0.0 || w_kl != 0.0) {
      const Matrix z_bar = batch_backward(model.decoder, dec, (2.0 * w_recon * inv_b) * diff,
                                          out.gradient.decoder, true);
      Matrix out_bar(2 * m, batch_size);
      out_bar.topRows(m) = z_bar + (w_kl * inv_b) * means;
      out_bar.bottomRows(m) =
          (z_bar.array() * eps.array() * 0.5 * sigmas.array() +
           (w_kl * inv_b * 0.5) * (logvars.array().exp() - 1.0))
              .matrix();
      batch_backward(model.encoder, enc, std::move(out_bar), out.gradient.encoder, false);
    }
  }

  // Curvature part; sampler statistics are constants.
  const Matrix points = sampler(means.transpose());
  const auto n_points = points.rows();
  if (n_points > 0) {
    if (points.cols() != m) throw ShapeError("loss: curvature points must be M x latent_dim");
    const bool curvature_grad = want_gradient && (w_pe != 0.0 || w_ex != 0.0);
    const bool weighted = w_pe != 0.0 || w_ex != 0.0;
    const double inv_m = 1.0 / static_cast<double>(n_points);
    std::vector<double> pe(n_points, 0.0), ex(n_points, 0.0);
    std::vector<char> valid(n_points, 1);
    std::vector<LayerGrads> slots(curvature_grad ? n_points : 0);
    parallel_for(static_cast<std::size_t>(n_points), [&](std::size_t i) {
      const Vector zi = points.row(static_cast<Eigen::Index>(i)).transpose();
      if (curvature_grad) {
        const JetTape tape = decoder_jet_tape(model.decoder, zi);
        const JetAdjoint adj = curvature_adjoint(tape.output, w_pe * inv_m, w_ex * inv_m,
                                                 config.jitter_scale);
        pe[i] = adj.pe;
        ex[i] = adj.ex;
        slots[i] = zeros_like(model.decoder);
        backprop_jet(model.decoder, tape, Vector::Zero(tape.output.output_dim()),
                     adj.jacobian_bar, adj.hessian_bar, slots[i]);
      } else {
        try {
          const GeometryAtPoint geo = geometry_at(decoder_jet(model.decoder, zi), config.jitter_scale);
          pe[i] = geo.pe_curvature;
          ex[i] = geo.ex_curvature;
        } catch (const SingularGeometryError&) {
          // Unweighted points are diagnostics only.
          if (weighted) throw;
          valid[i] = 0;
        }
      }
    });
    double pe_sum = 0.0, ex_sum = 0.0;
    long counted = 0;
    for (Eigen::Index i = 0; i < n_points; ++i) {
      if (!valid[i]) continue;
      ++counted;
      pe_sum += pe[i];
      ex_sum += ex[i];
      loss.pe_max = std::max(loss.pe_max, pe[i]);
      loss.ex_max = std::max(loss.ex_max, ex[i]);
      if (curvature_grad) add_into(out.gradient.decoder, slots[i]);
    }
    if (counted > 0) {
      loss.pe_mean = pe_sum / static_cast<double>(counted);
      loss.ex_mean = ex_sum / static_cast<double>(counted);
    }
    check_finite(loss.pe_mean, "pe");
    check_finite(loss.ex_mean, "ex");
    loss.pe_term = w_pe * loss.pe_mean;
    loss.ex_term = w_ex * loss.ex_mean;
  }
  loss.total = w_recon * loss.reconstruction + w_kl * loss.kl + loss.pe_term + loss.ex_term;
  check_finite(loss.total, "total");
  return out;
}

PointSampler fixed_points(const Matrix& points) {
  return [&points](const Matrix&) { return points; };
}

}  // namespace

LossBreakdown total_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                         const Matrix& curvature_points, const TrainingConfig& config,
                         const TermMask& mask) {
  return evaluate(model, batch, noise, fixed_points(curvature_points), config, mask, false).loss;
}

LossAndGradient loss_gradient(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                              const Matrix& curvature_points, const TrainingConfig& config,
                              const TermMask& mask) {
  return evaluate(model, batch, noise, fixed_points(curvature_points), config, mask, true);
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

VaeGradient zero_gradient(const VaeModel& model) {
  return {zeros_like(model.encoder), zeros_like(model.decoder)};
}

void adam_update(std::vector<Layer>& params, const LayerGrads& grads, LayerGrads& m1,
                 LayerGrads& m2, double lr, double b1, double b2, double c1, double c2) {
  constexpr double kEps = 1e-8;
  auto update = [&](auto& p, const auto& g, auto& a, auto& b) {
    a = b1 * a + (1.0 - b1) * g;
    b = b2 * b + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (a.array() / c1) / ((b.array() / c2).sqrt() + kEps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, grads[l].weight, m1[l].weight, m2[l].weight);
    update(params[l].bias, grads[l].bias, m1[l].bias, m2[l].bias);
  }
}

}  // namespace

AdamOptimizer::AdamOptimizer(const VaeModel& model, double learning_rate, double beta1,
                             double beta2)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      state_{zero_gradient(model), zero_gradient(model), 0} {}

void AdamOptimizer::step(VaeModel& model, const VaeGradient& gradient) {
  ++state_.step;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  adam_update(model.encoder.layers, gradient.encoder, state_.first_moment.encoder,
              state_.second_moment.encoder, lr_, beta1_, beta2_, c1, c2);
  adam_update(model.decoder.layers, gradient.decoder, state_.first_moment.decoder,
              state_.second_moment.decoder, lr_, beta1_, beta2_, c1, c2);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Batch start offsets; a trailing batch with a single sample is folded into
// its predecessor so every batch can estimate a latent covariance.
std::vector<Eigen::Index> batch_bounds(Eigen::Index n, Eigen::Index batch_size) {
  std::vector<Eigen::Index> bounds;
  for (Eigen::Index start = 0; start < n; start += batch_size) bounds.push_back(start);
  if (bounds.size() > 1 && n - bounds.back() < 2) bounds.pop_back();
  bounds.push_back(n);
  return bounds;
}

}  // namespace

TrainResult train(const Matrix& data, const TrainingConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  return train_from(init_vae(static_cast<int>(data.cols()), config), data, config, on_epoch);
}

TrainResult train_from(VaeModel model, const Matrix& data, const TrainingConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  const auto n = data.rows();
  if (n < 2) throw DomainError("train: need at least two samples");
  if (config.batch_size > n) throw DomainError("train: batch_size exceeds dataset size");
  if (data.cols() != model.data_dim()) throw ShapeError("train: data width does not match model");
  if (!data.allFinite()) throw DomainError("train: data contains non-finite entries");

  Rng noise_rng = make_stream(config.seed, Stream::kNoise);
  Rng sampler_rng = make_stream(config.seed, Stream::kSampler);
  Rng shuffle_rng = make_stream(config.seed, Stream::kShuffle);
  std::normal_distribution<double> normal(0.0, 1.0);

  AdamOptimizer optimizer(model, config.learning_rate, config.adam_beta1, config.adam_beta2);
  TrainResult result;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto bounds = batch_bounds(n, config.batch_size);
  const auto m = model.latent_dim;

  PointSampler sampler = [&](const Matrix& means) {
    return sample_curvature_points(means, config.m_samples, config.sampler_scale, sampler_rng);
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    double pe_max = 0.0, ex_max = 0.0;
    double points = 0.0;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const auto rows = bounds[b + 1] - bounds[b];
      Matrix batch(rows, data.cols());
      for (Eigen::Index r = 0; r < rows; ++r) batch.row(r) = data.row(order[bounds[b] + r]);
      Matrix noise(rows, m);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index k = 0; k < m; ++k) noise(r, k) = normal(noise_rng);
      LossAndGradient step;
      try {
        step = evaluate(model, batch, noise, sampler, config, {}, true);
      } catch (const DivergedTrainingError& e) {
        throw DivergedWithLog(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                              result.log);
      }
      const double w = static_cast<double>(rows) / static_cast<double>(n);
      metrics.recon += w * step.loss.reconstruction;
      metrics.kl += w * step.loss.kl;
      metrics.loss += w * step.loss.total;
      metrics.pe_mean += step.loss.pe_mean * config.m_samples;
      metrics.ex_mean += step.loss.ex_mean * config.m_samples;
      points += config.m_samples;
      pe_max = std::max(pe_max, step.loss.pe_max);
      ex_max = std::max(ex_max, step.loss.ex_max);
      optimizer.step(model, step.gradient);
    }
    metrics.pe_mean /= points;
    metrics.ex_mean /= points;
    metrics.pe_max_sqrt = std::sqrt(pe_max);
    metrics.ex_max_sqrt = std::sqrt(ex_max);
    result.log.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  result.model = std::move(model);
  return result;
}

Matrix encode_means(const VaeModel& model, const Matrix& data) {
  if (data.cols() != model.data_dim()) throw ShapeError("encode: feature count mismatch");
  Matrix means(data.rows(), model.latent_dim);
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    means.row(i) = encoder_forward(model.encoder, data.row(i).transpose()).mean.transpose();
  return means;
}

CurvatureAudit audit_curvature(const VaeModel& model, const Matrix& data, int m_samples,
                               double sampler_scale, double jitter_scale, Rng& rng) {
  const Matrix points =
      sample_curvature_points(encode_means(model, data), m_samples, sampler_scale, rng);
  std::vector<GeometryAtPoint> geo(static_cast<std::size_t>(points.rows()));
  parallel_for(geo.size(), [&](std::size_t i) {
    geo[i] = geometry_at(decoder_jet(model.decoder, points.row(static_cast<Eigen::Index>(i)).transpose()),
                         jitter_scale);
  });
  CurvatureAudit audit;
  for (const auto& g : geo) {
    audit.pe_mean += g.pe_curvature;
    audit.ex_mean += g.ex_curvature;
    audit.pe_max = std::max(audit.pe_max, g.pe_curvature);
    audit.ex_max = std::max(audit.ex_max, g.ex_curvature);
  }
  audit.pe_mean /= static_cast<double>(geo.size());
  audit.ex_mean /= static_cast<double>(geo.size());
  return audit;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch,recon,kl,pe_mean,ex_mean,pe_max_sqrt,ex_max_sqrt,loss\n";
  for (const auto& e : log) {
    out += join_csv({std::to_string(e.epoch), format_double(e.recon), format_double(e.kl),
                     format_double(e.pe_mean), format_double(e.ex_mean),
                     format_double(e.pe_max_sqrt), format_double(e.ex_max_sqrt),
                     format_double(e.loss)}) +
           "\n";
  }
  return out;
}

}  // namespace gvae
