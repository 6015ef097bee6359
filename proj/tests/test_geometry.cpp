#include "gvae/error.hpp"
#include "gvae/geometry.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace gvae;
using namespace gvae::testing;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

// Christoffel symbols from finite-differenced metric derivatives:
// 1/2 g^{kl} (d_mu g_{nu l} + d_nu g_{mu l} - d_l g_{mu nu}).
Matrix christoffel_from_metric(const AnalyticManifold& manifold, const Vector& z, double h = 1e-5) {
  const auto m = z.size();
  auto metric = [&](const Vector& p) {
    const Matrix j = analytic_jet(manifold, p).jacobian;
    return Matrix(j.transpose() * j);
  };
  std::vector<Matrix> dg(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    Vector zp = z, zm = z;
    zp(k) += h;
    zm(k) -= h;
    dg[k] = (metric(zp) - metric(zm)) / (2 * h);
  }
  const Matrix g_inv = metric(z).inverse();
  Matrix out = Matrix::Zero(m, m * m);
  for (Eigen::Index kap = 0; kap < m; ++kap)
    for (Eigen::Index mu = 0; mu < m; ++mu)
      for (Eigen::Index nu = 0; nu < m; ++nu)
        for (Eigen::Index l = 0; l < m; ++l)
          out(kap, mu * m + nu) +=
              0.5 * g_inv(kap, l) * (dg[mu](nu, l) + dg[nu](mu, l) - dg[l](mu, nu));
  return out;
}

}  // namespace

TEST_CASE("metric_from_jet") {
  SUBCASE("polar sheet at (2, 0) without jitter") {
    const auto r = metric_from_jet(analytic_jet(PolarSheet{}, vec2(2, 0)), 0.0);
    CHECK(r.metric.isApprox((Matrix(2, 2) << 1, 0, 0, 4).finished(), 1e-15));
    CHECK(r.metric_inverse.isApprox((Matrix(2, 2) << 1, 0, 0, 0.25).finished(), 1e-15));
    CHECK(r.jitter_used == 0.0);
  }
  SUBCASE("default jitter is relative to trace and reported") {
    const auto r = metric_from_jet(analytic_jet(PolarSheet{}, vec2(2, 0)));
    CHECK(r.jitter_used == doctest::Approx(1e-6 * 5.0 / 2.0));
    Matrix jittered = r.metric;
    jittered.diagonal().array() += r.jitter_used;
    CHECK((r.metric_inverse * jittered - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("orthonormal plane is an isometry") {
    Rng rng(4);
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, 6, 2));
    const Matrix a = qr.householderQ() * Matrix::Identity(6, 2);
    const auto r = metric_from_jet(analytic_jet(PlaneManifold{a, Vector::Zero(6)}, vec2(0.1, 0.2)), 0.0);
    CHECK(r.metric.isApprox(Matrix::Identity(2, 2), 1e-12));
  }
  SUBCASE("rank-deficient Jacobian is rescued by jitter") {
    Matrix a(3, 2);
    a << 1, 1, 2, 2, 3, 3;
    const Jet jet = analytic_jet(PlaneManifold{a, Vector::Zero(3)}, vec2(0, 0));
    const auto r = metric_from_jet(jet);
    CHECK(r.jitter_used > 0.0);
    CHECK(r.metric_inverse.allFinite());
    CHECK_THROWS_AS(metric_from_jet(jet, 0.0), SingularGeometryError);
  }
  SUBCASE("zero Jacobian is singular even with jitter") {
    Jet jet{Vector::Zero(3), Matrix::Zero(3, 2), Matrix::Zero(3, 4)};
    CHECK_THROWS_AS(metric_from_jet(jet), SingularGeometryError);
  }
}

TEST_CASE("christoffel symbols") {
  SUBCASE("polar sheet at r = 2") {
    for (double theta : {0.0, 0.4, 2.0}) {
      const Jet jet = analytic_jet(PolarSheet{}, vec2(2, theta));
      const GeometryAtPoint g = geometry_at(jet, 0.0);
      CHECK(g.christoffel_at(0, 1, 1) == doctest::Approx(-2.0).epsilon(1e-12));
      CHECK(g.christoffel_at(1, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(g.christoffel_at(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(std::abs(g.christoffel_at(0, 0, 0)) <= 1e-14);
      CHECK(std::abs(g.christoffel_at(0, 0, 1)) <= 1e-14);
      CHECK(std::abs(g.christoffel_at(1, 0, 0)) <= 1e-14);
      CHECK(std::abs(g.christoffel_at(1, 1, 1)) <= 1e-14);
    }
  }
  SUBCASE("sphere at the equator") {
    const GeometryAtPoint g = geometry_at(analytic_jet(SphereManifold{1.0}, vec2(kPi / 2, 0.3)), 0.0);
    CHECK(std::abs(g.christoffel_at(0, 1, 1)) <= 1e-14);
    CHECK(std::abs(g.christoffel_at(1, 0, 1)) <= 1e-14);
  }
  SUBCASE("plane gives zeros") {
    Rng rng(2);
    const Jet jet = analytic_jet(PlaneManifold{random_matrix(rng, 5, 2), Vector::Zero(5)}, vec2(1, 2));
    CHECK(geometry_at(jet).christoffel.isZero(0.0));
  }
  SUBCASE("agrees with the metric-derivative formula") {
    const std::vector<std::pair<AnalyticManifold, Vector>> cases = {
        {PolarSheet{}, vec2(0.7, 1.3)}, {PolarSheet{}, vec2(3.0, -0.4)},
        {SphereManifold{1.0}, vec2(0.8, 0.2)}, {SphereManifold{2.0}, vec2(2.1, -1.0)}};
    for (const auto& [manifold, z] : cases) {
      const GeometryAtPoint g = geometry_at(analytic_jet(manifold, z), 0.0);
      CHECK((g.christoffel - christoffel_from_metric(manifold, z)).cwiseAbs().maxCoeff() <= 1e-5);
    }
  }
  SUBCASE("symmetric in the lower indices") {
    Rng rng(9);
    const MlpModel model = random_decoder(rng, 3, 7);
    const GeometryAtPoint g = geometry_at(decoder_jet(model, random_vector(rng, 3)));
    for (int k = 0; k < 3; ++k)
      for (int mu = 0; mu < 3; ++mu)
        for (int nu = 0; nu < 3; ++nu) CHECK(g.christoffel_at(k, mu, nu) == g.christoffel_at(k, nu, mu));
  }
}

TEST_CASE("curvature scalars on analytic fixtures") {
  SUBCASE("polar sheet: L_PE = 3 / r^2, L_EX = 0") {
    for (double r : {0.5, 1.0, 2.0, 5.0}) {
      const GeometryAtPoint g = geometry_at(analytic_jet(PolarSheet{}, vec2(r, 0.9)), 0.0);
      CHECK(g.pe_curvature == doctest::Approx(3.0 / (r * r)).epsilon(1e-10));
      CHECK(std::abs(g.ex_curvature) <= 1e-10);
    }
  }
  SUBCASE("sphere: L_EX = 2 / R^2 at several chart points") {
    for (double radius : {1.0, 2.0}) {
      for (const Vector& z : {vec2(kPi / 2, 0.0), vec2(0.5, 0.1), vec2(1.0, 2.0), vec2(2.0, -1.0), vec2(2.8, 3.0)}) {
        const GeometryAtPoint g = geometry_at(analytic_jet(SphereManifold{radius}, z), 0.0);
        CHECK(g.ex_curvature == doctest::Approx(2.0 / (radius * radius)).epsilon(1e-9));
      }
      const GeometryAtPoint eq = geometry_at(analytic_jet(SphereManifold{radius}, vec2(kPi / 2, 1.0)), 0.0);
      CHECK(std::abs(eq.pe_curvature) <= 1e-10);
    }
  }
  SUBCASE("plane gives (0, 0)") {
    Rng rng(6);
    const Jet jet = analytic_jet(PlaneManifold{random_matrix(rng, 8, 3), Vector::Ones(8)}, random_vector(rng, 3));
    const GeometryAtPoint g = geometry_at(jet);
    CHECK(g.pe_curvature == 0.0);
    CHECK(g.ex_curvature == 0.0);
  }
  SUBCASE("default jitter perturbs values by O(jitter)") {
    const GeometryAtPoint g = geometry_at(analytic_jet(PolarSheet{}, vec2(2.0, 0.0)));
    CHECK(g.pe_curvature == doctest::Approx(0.75).epsilon(1e-5));
  }
}

TEST_CASE("tangential/normal decomposition on random decoders") {
  Rng rng(31);
  for (int trial = 0; trial < 120; ++trial) {
    const int m = 1 + trial % 3;
    const MlpModel model = random_decoder(rng, m, 4 + trial % 9);
    const Jet jet = decoder_jet(model, random_vector(rng, m));
    const GeometryAtPoint g = geometry_at(jet, 0.0);
    const double full = full_hessian_contraction(jet, g.metric_inverse);
    CHECK(g.pe_curvature >= 0.0);
    CHECK(g.ex_curvature >= 0.0);
    CHECK(std::abs(g.pe_curvature + g.ex_curvature - full) <= 1e-8 * std::max(full, 1e-300));
  }
}

TEST_CASE("curvatures are invariant under orthogonal maps of data space") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    MlpModel model = random_decoder(rng, 2, 6);
    const Vector z = random_vector(rng, 2);
    const GeometryAtPoint before = geometry_at(decoder_jet(model, z));
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, 6, 6));
    const Matrix q = qr.householderQ();
    model.layers.back().weight = q * model.layers.back().weight;
    model.layers.back().bias = q * model.layers.back().bias;
    const GeometryAtPoint after = geometry_at(decoder_jet(model, z));
    CHECK(after.pe_curvature == doctest::Approx(before.pe_curvature).epsilon(1e-8));
    CHECK(after.ex_curvature == doctest::Approx(before.ex_curvature).epsilon(1e-8));
  }
}

TEST_CASE("affine decoders have zero curvature") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    MlpModel model = random_decoder(rng, 2, 5);
    model.hidden_activation = Activation::kIdentity;
    const GeometryAtPoint g = geometry_at(decoder_jet(model, random_vector(rng, 2)));
    CHECK(std::abs(g.pe_curvature) <= 1e-10);
    CHECK(std::abs(g.ex_curvature) <= 1e-10);
  }
}

TEST_CASE("curvature_adjoint matches finite differences in J and H") {
  Rng rng(41);
  for (double jitter : {0.0, 1e-6, 1e-2}) {
    for (int trial = 0; trial < 4; ++trial) {
      const int m = 2 + trial % 2;
      Jet jet{random_vector(rng, 5), random_matrix(rng, 5, m), random_matrix(rng, 5, m * m)};
      for (int a = 0; a < 5; ++a)
        for (int mu = 0; mu < m; ++mu)
          for (int nu = 0; nu < mu; ++nu) jet.hessian(a, mu * m + nu) = jet.hessian(a, nu * m + mu);
      const double wpe = 0.7, wex = 1.3;
      auto objective = [&](const Jet& j) {
        const auto g = geometry_at(j, jitter);
        return wpe * g.pe_curvature + wex * g.ex_curvature;
      };
      const JetAdjoint adj = curvature_adjoint(jet, wpe, wex, jitter);
      const auto geo = geometry_at(jet, jitter);
      CHECK(adj.pe == doctest::Approx(geo.pe_curvature).epsilon(1e-12));
      CHECK(adj.ex == doctest::Approx(geo.ex_curvature).epsilon(1e-12));
      const double h = 1e-6;
      Matrix fd_j(5, m), fd_h(5, m * m);
      for (Eigen::Index i = 0; i < jet.jacobian.size(); ++i) {
        Jet p = jet, q = jet;
        p.jacobian.data()[i] += h;
        q.jacobian.data()[i] -= h;
        fd_j.data()[i] = (objective(p) - objective(q)) / (2 * h);
      }
      // Hessians are symmetric, so each (mu, nu) / (nu, mu) pair moves together
      // and the oracle is compared against the summed adjoint.
      Matrix adj_h(5, m * m);
      for (int a = 0; a < 5; ++a)
        for (int mu = 0; mu < m; ++mu)
          for (int nu = 0; nu < m; ++nu) {
            Jet p = jet, q = jet;
            for (Jet* j : {&p, &q}) {
              const double step = j == &p ? h : -h;
              j->hessian(a, mu * m + nu) += step;
              if (mu != nu) j->hessian(a, nu * m + mu) += step;
            }
            fd_h(a, mu * m + nu) = (objective(p) - objective(q)) / (2 * h);
            adj_h(a, mu * m + nu) = adj.hessian_bar(a, mu * m + nu) +
                                    (mu != nu ? adj.hessian_bar(a, nu * m + mu) : 0.0);
          }
      CHECK(max_relative_error(adj.jacobian_bar, fd_j) <= 1e-5);
      CHECK(max_relative_error(adj_h, fd_h) <= 1e-5);
    }
  }
}

TEST_CASE("tangent_angles") {
  SUBCASE("identical and planar tangent spaces") {
    Rng rng(3);
    const MlpModel model = random_decoder(rng, 3, 8);
    const Jet jet = decoder_jet(model, random_vector(rng, 3));
    CHECK(tangent_angles(jet, jet).cwiseAbs().maxCoeff() <= 1e-7);
    const PlaneManifold plane{random_matrix(rng, 6, 2), Vector::Zero(6)};
    CHECK(tangent_angles(analytic_jet(plane, vec2(0, 0)), analytic_jet(plane, vec2(3, -1)))
              .cwiseAbs()
              .maxCoeff() <= 1e-7);
  }
  SUBCASE("orthogonal equator points on the unit sphere") {
    const Jet a = analytic_jet(SphereManifold{1.0}, vec2(kPi / 2, 0.0));
    const Jet b = analytic_jet(SphereManifold{1.0}, vec2(kPi / 2, kPi / 2));
    const Vector angles = tangent_angles(a, b);
    // Independent oracle: SVD of the raw normalized tangent frames.
    Matrix ta(3, 2), tb(3, 2);
    ta << 0, 0, 0, 1, -1, 0;   // e_u = -z, e_v = y at (1,0,0)
    tb << 0, -1, 0, 0, -1, 0;  // e_u = -z, e_v = -x at (0,1,0)
    Eigen::JacobiSVD<Matrix> svd(ta.transpose() * tb);
    CHECK(angles(1) == doctest::Approx(kPi / 2).epsilon(1e-12));
    CHECK(angles(0) == doctest::Approx(std::acos(svd.singularValues()(0))).scale(1.0).epsilon(1e-7));
    CHECK(std::abs(angles(0)) <= 1e-7);
  }
  SUBCASE("symmetric in the arguments") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const MlpModel model = random_decoder(rng, 3, 9);
      const Jet a = decoder_jet(model, random_vector(rng, 3));
      const Jet b = decoder_jet(model, random_vector(rng, 3));
      CHECK((tangent_angles(a, b) - tangent_angles(b, a)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("rank deficiency is an error") {
    Matrix a(3, 2);
    a << 1, 2, 1, 2, 1, 2;
    const Jet bad = analytic_jet(PlaneManifold{a, Vector::Zero(3)}, vec2(0, 0));
    CHECK_THROWS_AS(tangent_angles(bad, bad), SingularGeometryError);
  }
}
