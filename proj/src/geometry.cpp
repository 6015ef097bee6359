#include "gvae/geometry.hpp"

#include "gvae/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gvae {

namespace {

std::string describe_point(const Jet& jet) {
  std::ostringstream os;
  os << "at decoded point with |f| = " << jet.value.norm();
  return os.str();
}

// kron(G, G) in the (mu*m + nu) pair ordering used for flattened Hessians.
Matrix pair_metric(const Matrix& g_inv) {
  const auto m = g_inv.rows();
  Matrix gg(m * m, m * m);
  for (Eigen::Index mu = 0; mu < m; ++mu)
    for (Eigen::Index nu = 0; nu < m; ++nu)
      for (Eigen::Index mb = 0; mb < m; ++mb)
        for (Eigen::Index nb = 0; nb < m; ++nb)
          gg(mu * m + nu, mb * m + nb) = g_inv(mu, mb) * g_inv(nu, nb);
  return gg;
}

double contract(const Matrix& t, const Matrix& gg) { return ((t * gg).array() * t.array()).sum(); }

}  // namespace

MetricResult metric_from_jet(const Jet& jet, double jitter_scale) {
  if (jitter_scale < 0.0) throw DomainError("jitter_scale must be nonnegative");
  const auto m = jet.latent_dim();
  MetricResult out;
  out.metric = jet.jacobian.transpose() * jet.jacobian;
  out.jitter_used = jitter_scale * out.metric.trace() / static_cast<double>(m);
  Matrix jittered = out.metric;
  jittered.diagonal().array() += out.jitter_used;
  Eigen::LLT<Matrix> llt(jittered);
  if (llt.info() != Eigen::Success)
    throw SingularGeometryError("metric factorization failed " + describe_point(jet));
  out.metric_inverse = llt.solve(Matrix::Identity(m, m));
  if (!out.metric_inverse.allFinite())
    throw SingularGeometryError("metric inverse is not finite " + describe_point(jet));
  // Exact symmetry keeps downstream contractions symmetric.
  out.metric_inverse = 0.5 * (out.metric_inverse + out.metric_inverse.transpose()).eval();
  return out;
}

Matrix christoffel(const Jet& jet, const Matrix& metric_inverse) {
  if (metric_inverse.rows() != jet.latent_dim() || metric_inverse.cols() != jet.latent_dim())
    throw ShapeError("christoffel: metric inverse does not match latent dim");
  const auto m = jet.latent_dim();
  Matrix gamma = metric_inverse * (jet.jacobian.transpose() * jet.hessian);
  for (Eigen::Index mu = 0; mu < m; ++mu)
    for (Eigen::Index nu = 0; nu < mu; ++nu) gamma.col(mu * m + nu) = gamma.col(nu * m + mu);
  return gamma;
}

Curvatures curvatures(const Jet& jet, const Matrix& metric_inverse, const Matrix& christoffel) {
  const Matrix gg = pair_metric(metric_inverse);
  const Matrix tangential = jet.jacobian * christoffel;
  const Matrix normal = jet.hessian - tangential;
  return {contract(tangential, gg), contract(normal, gg)};
}

double full_hessian_contraction(const Jet& jet, const Matrix& metric_inverse) {
  return contract(jet.hessian, pair_metric(metric_inverse));
}

GeometryAtPoint geometry_at(const Jet& jet, double jitter_scale) {
  MetricResult metric = metric_from_jet(jet, jitter_scale);
  GeometryAtPoint geo;
  geo.christoffel = christoffel(jet, metric.metric_inverse);
  const Curvatures c = curvatures(jet, metric.metric_inverse, geo.christoffel);
  geo.pe_curvature = c.pe;
  geo.ex_curvature = c.ex;
  geo.metric = std::move(metric.metric);
  geo.metric_inverse = std::move(metric.metric_inverse);
  geo.jitter_used = metric.jitter_used;
  return geo;
}

JetAdjoint curvature_adjoint(const Jet& jet, double pe_weight, double ex_weight,
                             double jitter_scale) {
  const auto m = jet.latent_dim();
  const Matrix& jac = jet.jacobian;
  const Matrix& hess = jet.hessian;

  const MetricResult metric = metric_from_jet(jet, jitter_scale);
  const Matrix& g_inv = metric.metric_inverse;
  const Matrix gg = pair_metric(g_inv);
  const Matrix k = jac.transpose() * hess;  // m x m^2
  const Matrix gamma = g_inv * k;
  const Matrix tangential = jac * gamma;
  const Matrix normal = hess - tangential;

  JetAdjoint adj;
  adj.pe = contract(tangential, gg);
  adj.ex = contract(normal, gg);

  const Matrix normal_bar = 2.0 * ex_weight * (normal * gg);
  const Matrix tangential_bar = 2.0 * pe_weight * (tangential * gg) - normal_bar;
  const Matrix gg_bar = pe_weight * (tangential.transpose() * tangential) +
                        ex_weight * (normal.transpose() * normal);

  adj.hessian_bar = normal_bar;
  adj.jacobian_bar = tangential_bar * gamma.transpose();
  const Matrix gamma_bar = jac.transpose() * tangential_bar;
  Matrix g_inv_bar = gamma_bar * k.transpose();
  const Matrix k_bar = g_inv * gamma_bar;
  adj.jacobian_bar.noalias() += hess * k_bar.transpose();
  adj.hessian_bar.noalias() += jac * k_bar;

  for (Eigen::Index mu = 0; mu < m; ++mu)
    for (Eigen::Index nu = 0; nu < m; ++nu)
      for (Eigen::Index mb = 0; mb < m; ++mb)
        for (Eigen::Index nb = 0; nb < m; ++nb) {
          const double b = gg_bar(mu * m + nu, mb * m + nb);
          g_inv_bar(mu, mb) += b * g_inv(nu, nb);
          g_inv_bar(nu, nb) += b * g_inv(mu, mb);
        }

  // G = (J^T J + eps I)^{-1}, eps = s tr(J^T J) / m
  const Matrix g_bar = -g_inv * g_inv_bar * g_inv;
  adj.jacobian_bar.noalias() += jac * (g_bar + g_bar.transpose());
  const double eps_bar = g_bar.trace();
  adj.jacobian_bar += (2.0 * jitter_scale / static_cast<double>(m) * eps_bar) * jac;
  return adj;
}

Vector tangent_angles(const Jet& a, const Jet& b) {
  if (a.jacobian.rows() != b.jacobian.rows() || a.jacobian.cols() != b.jacobian.cols())
    throw ShapeError("tangent_angles: jets have different shapes");
  const auto m = a.latent_dim();
  auto basis = [m](const Matrix& jac) {
    Eigen::ColPivHouseholderQR<Matrix> qr(jac);
    if (qr.rank() < m) throw SingularGeometryError("tangent space is rank deficient");
    Eigen::HouseholderQR<Matrix> thin(jac);
    return Matrix(thin.householderQ() * Matrix::Identity(jac.rows(), m));
  };
  const Matrix qa = basis(a.jacobian);
  const Matrix qb = basis(b.jacobian);
  const Matrix overlap = qa.transpose() * qb;
  // Cosines lose resolution near zero angle; there the sines of the
  // residual Qb - Qa Qa^T Qb are used instead.
  const Vector cosines = Eigen::JacobiSVD<Matrix>(overlap).singularValues();  // descending
  Vector sines = Eigen::JacobiSVD<Matrix>(qb - qa * overlap).singularValues();
  std::sort(sines.begin(), sines.end());  // ascending, pairs with descending cosines
  Vector angles(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double c = std::clamp(cosines(k), -1.0, 1.0);
    angles(k) = c * c > 0.5 ? std::asin(std::clamp(sines(k), 0.0, 1.0)) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

}  // namespace gvae
