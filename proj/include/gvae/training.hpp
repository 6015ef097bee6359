#pragma once

// Curvature-regularized VAE objective and its optimizer.
//
// Matrices of samples are row-major in the data sense: one row per sample.

#include "gvae/error.hpp"
#include "gvae/geometry.hpp"
#include "gvae/rng.hpp"
#include "gvae/vae.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gvae {

struct TrainingConfig {
  double beta = 0.01;
  double gamma = 1e-3;
  double delta = 1e-3;
  int m_samples = 16;
  double sampler_scale = 2.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int epochs = 50;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double jitter_scale = kDefaultJitterScale;
  // Architecture.
  int latent_dim = 2;
  std::vector<int> encoder_hidden{32, 32};
  std::vector<int> decoder_hidden{32, 32};

  // Throws DomainError on negative weights or nonpositive sizes.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
// Unknown keys are rejected so typos surface as parse errors.
void from_json(const nlohmann::json& j, TrainingConfig& c);

VaeModel init_vae(int data_dim, const TrainingConfig& config);

double kl_divergence(const Vector& mean, const Vector& logvar);
Vector reparameterize(const Vector& mean, const Vector& logvar, const Vector& noise);
double reconstruction_loss(const Vector& x, const Vector& x_hat);

// c + V diag(s sqrt(lambda)) u with u ~ U[-1,1]^m, where (c, V, lambda) are
// the mean and eigendecomposed covariance of the rows of latent_means.
Matrix sample_curvature_points(const Matrix& latent_means, int m_samples, double sampler_scale,
                               Rng& rng);

// Selects which objective terms participate; used to isolate terms in tests.
struct TermMask {
  bool reconstruction = true;
  bool kl = true;
  bool pe = true;
  bool ex = true;
};

struct LossBreakdown {
  double reconstruction = 0.0;  // batch mean of ||x - x_hat||^2
  double kl = 0.0;              // batch mean KL
  double pe_mean = 0.0;         // mean raw L_PE over curvature points
  double ex_mean = 0.0;
  double pe_max = 0.0;
  double ex_max = 0.0;
  double pe_term = 0.0;  // gamma * pe_mean
  double ex_term = 0.0;  // delta * ex_mean
  double total = 0.0;
};

struct VaeGradient {
  LayerGrads encoder;
  LayerGrads decoder;
};

// batch: B x N, noise: B x m standard-normal draws, curvature_points: M x m.
LossBreakdown total_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                         const Matrix& curvature_points, const TrainingConfig& config,
                         const TermMask& mask = {});

struct LossAndGradient {
  LossBreakdown loss;
  VaeGradient gradient;
};

LossAndGradient loss_gradient(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                              const Matrix& curvature_points, const TrainingConfig& config,
                              const TermMask& mask = {});

struct OptimizerState {
  VaeGradient first_moment;
  VaeGradient second_moment;
  long step = 0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const VaeModel& model, double learning_rate, double beta1, double beta2);
  void step(VaeModel& model, const VaeGradient& gradient);
  const OptimizerState& state() const { return state_; }

 private:
  double lr_, beta1_, beta2_;
  OptimizerState state_;
};

struct EpochMetrics {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double pe_mean = 0.0;
  double ex_mean = 0.0;
  double pe_max_sqrt = 0.0;
  double ex_max_sqrt = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  VaeModel model;
  std::vector<EpochMetrics> log;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Adam over shuffled minibatches. Throws DivergedTrainingError (carrying the
// partial log) when any loss term becomes non-finite.
TrainResult train(const Matrix& data, const TrainingConfig& config,
                  const EpochCallback& on_epoch = {});

// Same schedule starting from a given model.
TrainResult train_from(VaeModel model, const Matrix& data, const TrainingConfig& config,
                       const EpochCallback& on_epoch = {});

class DivergedWithLog : public DivergedTrainingError {
 public:
  DivergedWithLog(const std::string& what, std::vector<EpochMetrics> log)
      : DivergedTrainingError(what), log_(std::move(log)) {}
  const std::vector<EpochMetrics>& partial_log() const { return log_; }

 private:
  std::vector<EpochMetrics> log_;
};

// Curvature statistics of a model at fresh sample points drawn around the
// encoder means of `data`.
struct CurvatureAudit {
  double pe_mean = 0.0;
  double ex_mean = 0.0;
  double pe_max = 0.0;
  double ex_max = 0.0;
};
CurvatureAudit audit_curvature(const VaeModel& model, const Matrix& data, int m_samples,
                               double sampler_scale, double jitter_scale, Rng& rng);

Matrix encode_means(const VaeModel& model, const Matrix& data);

std::string metrics_csv(const std::vector<EpochMetrics>& log);

}  // namespace gvae
