#pragma once

// Second-order jets of maps R^m -> R^N with respect to the latent input.
//
// Hessians are stored flattened as an N x (m*m) matrix whose column
// mu*m + nu holds d^2 f^a / dz^mu dz^nu. With this layout every affine
// layer acts on value, Jacobian and Hessian by the same matrix product.

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace gvae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Jet {
  Vector value;     // N
  Matrix jacobian;  // N x m
  Matrix hessian;   // N x m*m

  Eigen::Index output_dim() const { return value.size(); }
  Eigen::Index latent_dim() const { return jacobian.cols(); }
  double hessian_at(Eigen::Index a, Eigen::Index mu, Eigen::Index nu) const {
    return hessian(a, mu * latent_dim() + nu);
  }
};

struct SoftplusJet {
  double value;
  double first;
  double second;
  double third;
};

// ln(1 + e^x) and its first three derivatives; total on finite input.
SoftplusJet softplus_jet(double x);

enum class Activation { kSoftplus, kIdentity };
enum class Role { kEncoder, kDecoder };

std::string to_string(Activation a);
std::string to_string(Role r);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Fully connected network; hidden layers use `hidden_activation`, the last
// layer is linear.
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<Layer> layers;
  Activation hidden_activation = Activation::kSoftplus;
  Activation output_activation = Activation::kIdentity;
  Role role = Role::kDecoder;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t parameter_count() const;

  // Throws ShapeError when dims and weight shapes disagree.
  void validate() const;
};

// Layer-shaped accumulator for parameter gradients.
using LayerGrads = std::vector<Layer>;
LayerGrads zeros_like(const MlpModel& model);
void add_into(LayerGrads& acc, const LayerGrads& other, double scale = 1.0);

// Plain forward pass of one input vector.
Vector forward(const MlpModel& model, const Vector& x);

// Value, Jacobian and Hessian of the decoder at z, propagated layer by layer.
Jet decoder_jet(const MlpModel& model, const Vector& z);

struct EncoderOutput {
  Vector mean;
  Vector logvar;
};

EncoderOutput encoder_forward(const MlpModel& model, const Vector& x);

// Intermediate jets kept for the reverse sweep in `backprop_jet`.
struct JetTape {
  struct Step {
    Jet input;       // jet entering the affine map
    Jet preact;      // jet after the affine map
    bool activated;  // softplus applied after this affine map
  };
  std::vector<Step> steps;
  Jet output;
};

JetTape decoder_jet_tape(const MlpModel& model, const Vector& z);

// Accumulates into `grads` the weight gradient of a scalar whose partials with
// respect to the output jet are (value_bar, jacobian_bar, hessian_bar).
void backprop_jet(const MlpModel& model, const JetTape& tape, const Vector& value_bar,
                  const Matrix& jacobian_bar, const Matrix& hessian_bar, LayerGrads& grads);

// Closed-form test manifolds.
struct PlaneManifold {
  Matrix a;  // N x m
  Vector b;  // N
};
struct PolarSheet {};  // (r, theta) -> (r cos theta, r sin theta), r > 0
struct SphereManifold {
  double radius = 1.0;  // (u, v) -> R (sin u cos v, sin u sin v, cos u), 0 < u < pi
};
using AnalyticManifold = std::variant<PlaneManifold, PolarSheet, SphereManifold>;

Jet analytic_jet(const AnalyticManifold& manifold, const Vector& z);

// Uniform ±sqrt(6/(fan_in+fan_out)) weights, zero biases.
template <class Rng>
MlpModel init_mlp(const std::vector<int>& dims, Role role, Rng& rng);

}  // namespace gvae

#include <random>

namespace gvae {

template <class Rng>
MlpModel init_mlp(const std::vector<int>& dims, Role role, Rng& rng) {
  MlpModel model;
  model.layer_dims = dims;
  model.role = role;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) layer.weight(i, j) = dist(rng);
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

}  // namespace gvae
