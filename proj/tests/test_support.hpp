#pragma once

// Independent numerical oracles shared by unit and acceptance tests. Nothing
// here calls into jet propagation or adjoint code.

#include "gvae/jets.hpp"
#include "gvae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace gvae::testing {

using VectorFn = std::function<Vector(const Vector&)>;

// Central differences, N x m.
inline Matrix fd_jacobian(const VectorFn& f, const Vector& z, double h = 1e-5) {
  const Vector f0 = f(z);
  Matrix jac(f0.size(), z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vector zp = z, zm = z;
    zp(k) += h;
    zm(k) -= h;
    jac.col(k) = (f(zp) - f(zm)) / (2.0 * h);
  }
  return jac;
}

// Second-order central differences, N x m*m in (mu*m + nu) order. The error
// is about h^2 |f''''| / 12 + 4 eps |f| / h^2; h = 1e-3 sits near the balance
// point for O(1) networks, smaller steps are dominated by roundoff.
inline Matrix fd_hessian(const VectorFn& f, const Vector& z, double h = 1e-3) {
  const auto m = z.size();
  const Vector f0 = f(z);
  Matrix hess(f0.size(), m * m);
  for (Eigen::Index mu = 0; mu < m; ++mu) {
    for (Eigen::Index nu = 0; nu < m; ++nu) {
      auto at = [&](double a, double b) {
        Vector p = z;
        p(mu) += a;
        p(nu) += b;
        return f(p);
      };
      if (mu == nu) {
        Vector zp = z, zm = z;
        zp(mu) += h;
        zm(mu) -= h;
        hess.col(mu * m + nu) = (f(zp) - 2.0 * f0 + f(zm)) / (h * h);
      } else {
        hess.col(mu * m + nu) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
      }
    }
  }
  return hess;
}

// Entrywise |a - b| / max(|b|, floor * max|b|): relative error per entry,
// with entries far below the array's scale measured against that scale.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-3) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(b.data()[i]), floor * scale);
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return worst;
}

// Random softplus decoder, hidden widths drawn from [max(2, m+1), 12].
inline MlpModel random_decoder(Rng& rng, int m, int n_out, int hidden_layers = 2,
                               double weight_scale = 1.0) {
  std::uniform_int_distribution<int> width(std::max(2, m + 1), 12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<int> dims{m};
  for (int l = 0; l < hidden_layers; ++l) dims.push_back(width(rng));
  dims.push_back(n_out);
  MlpModel model;
  model.layer_dims = dims;
  model.role = Role::kDecoder;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1])};
    const double s = weight_scale / std::sqrt(static_cast<double>(dims[l]));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = s * 2.0 * u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.5 * u(rng);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return a;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace gvae::testing
