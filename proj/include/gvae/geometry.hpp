#pragma once

// Induced-metric geometry of a decoder manifold at one latent point.
//
// Christoffel symbols are stored as an m x (m*m) matrix: row kappa, column
// mu*m + nu holds Gamma^kappa_{mu nu}, matching the flattened Hessian layout
// of Jet.

#include "gvae/jets.hpp"

namespace gvae {

inline constexpr double kDefaultJitterScale = 1e-6;

struct MetricResult {
  Matrix metric;
  Matrix metric_inverse;  // inverse of metric + jitter_used * I
  double jitter_used = 0.0;
};

struct GeometryAtPoint {
  Matrix metric;
  Matrix metric_inverse;
  Matrix christoffel;
  double pe_curvature = 0.0;
  double ex_curvature = 0.0;
  double jitter_used = 0.0;

  double christoffel_at(Eigen::Index kappa, Eigen::Index mu, Eigen::Index nu) const {
    return christoffel(kappa, mu * metric.rows() + nu);
  }
};

// g = J^T J, inverted after adding jitter_scale * trace(g) / m to the diagonal.
// Throws SingularGeometryError when the Cholesky factorization fails.
MetricResult metric_from_jet(const Jet& jet, double jitter_scale = kDefaultJitterScale);

// Gamma^kappa_{mu nu} = g^{kappa lambda} sum_a J^a_lambda H^a_{mu nu}.
Matrix christoffel(const Jet& jet, const Matrix& metric_inverse);

struct Curvatures {
  double pe = 0.0;
  double ex = 0.0;
};

// Squared g^{-1}-norms of the tangential (Gamma J) and normal (H - Gamma J)
// parts of the Hessian. Raw contractions, no normalization by N or m.
Curvatures curvatures(const Jet& jet, const Matrix& metric_inverse, const Matrix& christoffel);

// g^{mu mubar} g^{nu nubar} sum_a H^a_{mu nu} H^a_{mubar nubar}.
double full_hessian_contraction(const Jet& jet, const Matrix& metric_inverse);

GeometryAtPoint geometry_at(const Jet& jet, double jitter_scale = kDefaultJitterScale);

// Gradient of pe_weight * L_PE + ex_weight * L_EX with respect to the jet's
// Jacobian and Hessian, including the dependence through the jittered metric.
struct JetAdjoint {
  double pe = 0.0;
  double ex = 0.0;
  Matrix jacobian_bar;  // N x m
  Matrix hessian_bar;   // N x m*m
};
JetAdjoint curvature_adjoint(const Jet& jet, double pe_weight, double ex_weight,
                             double jitter_scale = kDefaultJitterScale);

// Principal angles between the tangent spaces spanned by the two Jacobians,
// ascending, in radians. Throws SingularGeometryError on rank deficiency.
Vector tangent_angles(const Jet& a, const Jet& b);

}  // namespace gvae
