#include "gvae/jets.hpp"

#include "gvae/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gvae {

namespace {

constexpr double kSoftplusLinearThreshold = 30.0;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Jet seed_jet(const Vector& z) {
  const auto m = z.size();
  Jet jet;
  jet.value = z;
  jet.jacobian = Matrix::Identity(m, m);
  jet.hessian = Matrix::Zero(m, m * m);
  return jet;
}

// Copies the (mu <= nu) entries onto (nu, mu) so symmetry holds exactly.
void mirror_hessian(Matrix& hessian, Eigen::Index m) {
  for (Eigen::Index mu = 0; mu < m; ++mu)
    for (Eigen::Index nu = 0; nu < mu; ++nu) hessian.col(mu * m + nu) = hessian.col(nu * m + mu);
}

Jet affine(const Layer& layer, const Jet& in) {
  Jet out;
  out.value = layer.weight * in.value + layer.bias;
  out.jacobian = layer.weight * in.jacobian;
  out.hessian = layer.weight * in.hessian;
  mirror_hessian(out.hessian, in.jacobian.cols());
  return out;
}

Jet softplus(const Jet& in) {
  const auto n = in.value.size();
  const auto m = in.jacobian.cols();
  Jet out{Vector(n), Matrix(n, m), Matrix(n, m * m)};
  for (Eigen::Index a = 0; a < n; ++a) {
    const SoftplusJet s = softplus_jet(in.value(a));
    out.value(a) = s.value;
    for (Eigen::Index mu = 0; mu < m; ++mu) {
      out.jacobian(a, mu) = s.first * in.jacobian(a, mu);
      for (Eigen::Index nu = mu; nu < m; ++nu) {
        out.hessian(a, mu * m + nu) = s.second * in.jacobian(a, mu) * in.jacobian(a, nu) +
                                      s.first * in.hessian(a, mu * m + nu);
      }
    }
  }
  mirror_hessian(out.hessian, m);
  return out;
}

void check_input(const MlpModel& model, Eigen::Index size, const char* what) {
  if (size != model.input_dim()) {
    std::ostringstream os;
    os << what << ": input has length " << size << ", model expects " << model.input_dim();
    throw ShapeError(os.str());
  }
}

}  // namespace

SoftplusJet softplus_jet(double x) {
  const double s = logistic(x);
  const double value =
      x > kSoftplusLinearThreshold ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return {value, s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s)};
}

std::string to_string(Activation a) { return a == Activation::kSoftplus ? "softplus" : "identity"; }
std::string to_string(Role r) { return r == Role::kEncoder ? "encoder" : "decoder"; }

std::size_t MlpModel::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) count += layer.weight.size() + layer.bias.size();
  return count;
}

void MlpModel::validate() const {
  if (layer_dims.size() < 2) throw ShapeError("mlp needs at least two layer dims");
  for (int d : layer_dims)
    if (d <= 0) throw ShapeError("mlp layer dims must be positive");
  if (layers.size() + 1 != layer_dims.size())
    throw ShapeError("mlp layer count does not match layer dims");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != layer_dims[l + 1] || layer.weight.cols() != layer_dims[l] ||
        layer.bias.size() != layer_dims[l + 1]) {
      std::ostringstream os;
      os << "layer " << l << " has weight " << layer.weight.rows() << "x" << layer.weight.cols()
         << ", expected " << layer_dims[l + 1] << "x" << layer_dims[l];
      throw ShapeError(os.str());
    }
  }
}

LayerGrads zeros_like(const MlpModel& model) {
  LayerGrads grads;
  grads.reserve(model.layers.size());
  for (const auto& layer : model.layers)
    grads.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                     Vector::Zero(layer.bias.size())});
  return grads;
}

void add_into(LayerGrads& acc, const LayerGrads& other, double scale) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += scale * other[l].weight;
    acc[l].bias += scale * other[l].bias;
  }
}

Vector forward(const MlpModel& model, const Vector& x) {
  check_input(model, x.size(), "forward");
  Vector h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Vector y = model.layers[l].weight * h + model.layers[l].bias;
    const bool hidden = l + 1 < model.layers.size();
    if (hidden && model.hidden_activation == Activation::kSoftplus) {
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = softplus_jet(y(i)).value;
    }
    h = std::move(y);
  }
  return h;
}

JetTape decoder_jet_tape(const MlpModel& model, const Vector& z) {
  if (model.role != Role::kDecoder) throw ShapeError("decoder_jet requires a decoder model");
  check_input(model, z.size(), "decoder_jet");
  JetTape tape;
  Jet current = seed_jet(z);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const bool activated =
        l + 1 < model.layers.size() && model.hidden_activation == Activation::kSoftplus;
    Jet pre = affine(model.layers[l], current);
    Jet next = activated ? softplus(pre) : pre;
    tape.steps.push_back({std::move(current), std::move(pre), activated});
    current = std::move(next);
  }
  tape.output = std::move(current);
  return tape;
}

Jet decoder_jet(const MlpModel& model, const Vector& z) {
  return std::move(decoder_jet_tape(model, z).output);
}

void backprop_jet(const MlpModel& model, const JetTape& tape, const Vector& value_bar,
                  const Matrix& jacobian_bar, const Matrix& hessian_bar, LayerGrads& grads) {
  const auto m = tape.output.latent_dim();
  Vector v_bar = value_bar;
  Matrix j_bar = jacobian_bar;
  Matrix h_bar = hessian_bar;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& step = tape.steps[l];
    if (step.activated) {
      // u = softplus(y): pull (v_bar, j_bar, h_bar) from u back onto y.
      const Jet& y = step.preact;
      const auto n = y.value.size();
      Vector yv_bar(n);
      Matrix yj_bar(n, m);
      Matrix yh_bar(n, m * m);
      for (Eigen::Index a = 0; a < n; ++a) {
        const SoftplusJet s = softplus_jet(y.value(a));
        double from_j = 0.0;
        double from_hh = 0.0;
        double from_h = 0.0;
        for (Eigen::Index mu = 0; mu < m; ++mu) {
          from_j += j_bar(a, mu) * y.jacobian(a, mu);
          double sym = 0.0;
          for (Eigen::Index nu = 0; nu < m; ++nu) {
            const double hb = h_bar(a, mu * m + nu);
            from_hh += hb * y.jacobian(a, mu) * y.jacobian(a, nu);
            from_h += hb * y.hessian(a, mu * m + nu);
            sym += (hb + h_bar(a, nu * m + mu)) * y.jacobian(a, nu);
          }
          yj_bar(a, mu) = s.first * j_bar(a, mu) + s.second * sym;
        }
        yv_bar(a) = s.first * v_bar(a) + s.second * (from_j + from_h) + s.third * from_hh;
        for (Eigen::Index k = 0; k < m * m; ++k) yh_bar(a, k) = s.first * h_bar(a, k);
      }
      v_bar = std::move(yv_bar);
      j_bar = std::move(yj_bar);
      h_bar = std::move(yh_bar);
    }
    const Jet& x = step.input;
    const Matrix& w = model.layers[l].weight;
    grads[l].weight.noalias() += v_bar * x.value.transpose();
    grads[l].weight.noalias() += j_bar * x.jacobian.transpose();
    if (l > 0) grads[l].weight.noalias() += h_bar * x.hessian.transpose();
    grads[l].bias += v_bar;
    if (l > 0) {
      v_bar = w.transpose() * v_bar;
      j_bar = w.transpose() * j_bar;
      h_bar = w.transpose() * h_bar;
    }
  }
}

EncoderOutput encoder_forward(const MlpModel& model, const Vector& x) {
  if (model.role != Role::kEncoder) throw ShapeError("encoder_forward requires an encoder model");
  if (model.output_dim() % 2 != 0) throw ShapeError("encoder output dim must be even (2m)");
  const Vector out = forward(model, x);
  const auto m = out.size() / 2;
  return {out.head(m), out.tail(m)};
}

Jet analytic_jet(const AnalyticManifold& manifold, const Vector& z) {
  struct Visitor {
    const Vector& z;
    Jet operator()(const PlaneManifold& p) const {
      if (p.a.cols() != z.size() || p.b.size() != p.a.rows())
        throw ShapeError("plane: A must be N x m with b of length N");
      return {p.a * z + p.b, p.a, Matrix::Zero(p.a.rows(), z.size() * z.size())};
    }
    Jet operator()(const PolarSheet&) const {
      if (z.size() != 2) throw ShapeError("polar sheet is a 2-D chart");
      const double r = z(0);
      const double t = z(1);
      if (!(r > 0.0)) throw DomainError("polar sheet chart requires r > 0");
      const double c = std::cos(t);
      const double s = std::sin(t);
      Jet jet{Vector(2), Matrix(2, 2), Matrix::Zero(2, 4)};
      jet.value << r * c, r * s;
      jet.jacobian << c, -r * s, s, r * c;
      // columns: rr, r-theta, theta-r, theta-theta
      jet.hessian.col(1) << -s, c;
      jet.hessian.col(2) << -s, c;
      jet.hessian.col(3) << -r * c, -r * s;
      return jet;
    }
    Jet operator()(const SphereManifold& sp) const {
      if (z.size() != 2) throw ShapeError("sphere is a 2-D chart");
      const double u = z(0);
      const double v = z(1);
      if (!(u > 0.0 && u < std::numbers::pi)) throw DomainError("sphere chart requires 0 < u < pi");
      const double r = sp.radius;
      const double su = std::sin(u), cu = std::cos(u), sv = std::sin(v), cv = std::cos(v);
      Jet jet{Vector(3), Matrix(3, 2), Matrix(3, 4)};
      jet.value << r * su * cv, r * su * sv, r * cu;
      jet.jacobian << r * cu * cv, -r * su * sv, r * cu * sv, r * su * cv, -r * su, 0.0;
      jet.hessian.col(0) << -r * su * cv, -r * su * sv, -r * cu;
      jet.hessian.col(1) << -r * cu * sv, r * cu * cv, 0.0;
      jet.hessian.col(2) = jet.hessian.col(1);
      jet.hessian.col(3) << -r * su * cv, -r * su * sv, 0.0;
      return jet;
    }
  };
  return std::visit(Visitor{z}, manifold);
}

}  // namespace gvae
