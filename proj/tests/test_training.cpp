#include "gvae/data.hpp"
#include "gvae/error.hpp"
#include "gvae/training.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace gvae;
using namespace gvae::testing;

namespace {

struct TinyProblem {
  TrainingConfig config;
  VaeModel model;
  Matrix batch, noise, points;
};

TinyProblem tiny_problem(std::uint64_t seed, double gamma, double delta, double beta = 0.5) {
  TinyProblem p;
  p.config.seed = seed;
  p.config.beta = beta;
  p.config.gamma = gamma;
  p.config.delta = delta;
  p.config.latent_dim = 2;
  p.config.encoder_hidden = {8};
  p.config.decoder_hidden = {8};
  p.model = init_vae(5, p.config);
  Rng rng(seed + 100);
  p.batch = random_matrix(rng, 6, 5);
  p.noise = random_matrix(rng, 6, 2);
  p.points = random_matrix(rng, 4, 2, 0.7);
  return p;
}

}  // namespace

TEST_CASE("kl_divergence") {
  CHECK(kl_divergence(Vector::Zero(3), Vector::Zero(3)) == 0.0);
  CHECK(kl_divergence(Vector::Ones(1), Vector::Zero(1)) == 0.5);
  const Vector lv = (Vector(2) << std::log(4.0), 0.0).finished();
  CHECK(kl_divergence(Vector::Zero(2), lv) == doctest::Approx(0.5 * (3.0 - std::log(4.0))).epsilon(1e-14));
  CHECK(kl_divergence(Vector::Zero(2), lv) == doctest::Approx(0.8069).epsilon(1e-4));
}

TEST_CASE("reparameterize") {
  const Vector mean = (Vector(2) << 0.3, -1.0).finished();
  CHECK(reparameterize(mean, Vector::Constant(2, 1.7), Vector::Zero(2)) == mean);
  const Vector e = (Vector(2) << 0.5, 2.0).finished();
  CHECK(reparameterize(mean, Vector::Zero(2), e) == mean + e);
  CHECK(reparameterize(Vector::Zero(1), Vector::Constant(1, std::log(4.0)), Vector::Ones(1))(0) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(reparameterize(mean, Vector::Zero(3), e), ShapeError);
}

TEST_CASE("reconstruction_loss") {
  CHECK(reconstruction_loss(Vector::Ones(4), Vector::Ones(4)) == 0.0);
  CHECK(reconstruction_loss((Vector(2) << 1, 0).finished(), Vector::Zero(2)) == 1.0);
  CHECK(reconstruction_loss((Vector(3) << 1, 2, 3).finished(), Vector::Zero(3)) == 14.0);
  CHECK_THROWS_AS(reconstruction_loss(Vector::Zero(2), Vector::Zero(3)), ShapeError);
}

TEST_CASE("sample_curvature_points") {
  // corners of a square: population covariance diag(a^2, b^2)
  auto corners = [](double a, double b, double cx, double cy) {
    Matrix m(4, 2);
    m << cx + a, cy + b, cx + a, cy - b, cx - a, cy + b, cx - a, cy - b;
    return m;
  };
  SUBCASE("identity covariance, unit scale stays in the unit box") {
    Rng rng(4);
    const Matrix pts = sample_curvature_points(corners(1, 1, 3, -2), 500, 1.0, rng);
    CHECK(((pts.col(0).array() - 3.0).abs() <= 1.0 + 1e-12).all());
    CHECK(((pts.col(1).array() + 2.0).abs() <= 1.0 + 1e-12).all());
  }
  SUBCASE("degenerate covariance collapses to the center") {
    Rng rng(4);
    const Matrix same = Matrix::Constant(5, 3, 0.25);
    const Matrix pts = sample_curvature_points(same, 20, 2.0, rng);
    CHECK((pts.array() == 0.25).all());
  }
  SUBCASE("per-axis variance of the uniform box") {
    Rng rng(9);
    const Matrix pts = sample_curvature_points(corners(1, 2, 0, 0), 10000, 1.0, rng);
    const Matrix c = pts.rowwise() - pts.colwise().mean();
    const Vector var = (c.array().square().colwise().sum() / 10000.0).transpose();
    CHECK(std::abs(var(0) - 1.0 / 3.0) <= 0.1 / 3.0);
    CHECK(std::abs(var(1) - 4.0 / 3.0) <= 0.4 / 3.0);
  }
  SUBCASE("insufficient points") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_curvature_points(Matrix::Zero(1, 2), 4, 1.0, rng), DomainError);
  }
  SUBCASE("same stream state gives the same draws") {
    Rng a = make_stream(5, Stream::kSampler), b = make_stream(5, Stream::kSampler);
    CHECK(sample_curvature_points(corners(1, 2, 0, 0), 8, 2.0, a) ==
          sample_curvature_points(corners(1, 2, 0, 0), 8, 2.0, b));
  }
}

TEST_CASE("total_loss breakdown") {
  SUBCASE("gamma = delta = 0 is the beta-VAE objective") {
    const TinyProblem p = tiny_problem(3, 0.0, 0.0);
    const LossBreakdown l = total_loss(p.model, p.batch, p.noise, p.points, p.config);
    CHECK(l.pe_term == 0.0);
    CHECK(l.ex_term == 0.0);
    CHECK(l.total == l.reconstruction + p.config.beta * l.kl);
  }
  SUBCASE("affine decoder has exactly zero curvature") {
    TinyProblem p = tiny_problem(3, 1.0, 1.0);
    p.model.decoder.hidden_activation = Activation::kIdentity;
    const LossBreakdown l = total_loss(p.model, p.batch, p.noise, p.points, p.config);
    CHECK(l.pe_mean == 0.0);
    CHECK(l.ex_mean == 0.0);
    CHECK(l.pe_term == 0.0);
    CHECK(l.ex_term == 0.0);
  }
  SUBCASE("terms combine with their weights and the mean over points") {
    const TinyProblem p = tiny_problem(6, 0.3, 0.7);
    const LossBreakdown l = total_loss(p.model, p.batch, p.noise, p.points, p.config);
    double pe = 0.0, ex = 0.0;
    for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
      const auto g = geometry_at(decoder_jet(p.model.decoder, p.points.row(i).transpose()),
                                 p.config.jitter_scale);
      pe += g.pe_curvature / 4.0;
      ex += g.ex_curvature / 4.0;
    }
    CHECK(l.pe_mean == doctest::Approx(pe).epsilon(1e-13));
    CHECK(l.ex_mean == doctest::Approx(ex).epsilon(1e-13));
    CHECK(l.pe_term >= 0.0);
    CHECK(l.ex_term >= 0.0);
    CHECK(l.total == doctest::Approx(l.reconstruction + 0.5 * l.kl + 0.3 * pe + 0.7 * ex).epsilon(1e-13));
  }
  SUBCASE("reproducible bit for bit") {
    const TinyProblem a = tiny_problem(8, 1.0, 1.0), b = tiny_problem(8, 1.0, 1.0);
    CHECK(total_loss(a.model, a.batch, a.noise, a.points, a.config).total ==
          total_loss(b.model, b.batch, b.noise, b.points, b.config).total);
  }
  SUBCASE("non-finite data is a diverged-training error") {
    TinyProblem p = tiny_problem(8, 1.0, 1.0);
    p.batch(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(total_loss(p.model, p.batch, p.noise, p.points, p.config), DivergedTrainingError);
  }
  SUBCASE("shape errors") {
    const TinyProblem p = tiny_problem(8, 1.0, 1.0);
    CHECK_THROWS_AS(total_loss(p.model, Matrix::Zero(6, 4), p.noise, p.points, p.config), ShapeError);
    CHECK_THROWS_AS(total_loss(p.model, p.batch, Matrix::Zero(5, 2), p.points, p.config), ShapeError);
  }
}

TEST_CASE("loss_gradient matches finite differences per term and combined") {
  struct Case {
    const char* name;
    TermMask mask;
  };
  const Case cases[] = {{"reconstruction", {true, false, false, false}},
                        {"kl", {false, true, false, false}},
                        {"pe", {false, false, true, false}},
                        {"ex", {false, false, false, true}},
                        {"combined", {}}};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TinyProblem p = tiny_problem(seed, 1.0, 1.0);
    for (const auto& c : cases) {
      CAPTURE(c.name);
      CAPTURE(seed);
      const GradientComparison cmp = compare_gradient(p.model, p.batch, p.noise, p.points, p.config, c.mask);
      CHECK(cmp.max_error() <= 1e-4);
    }
  }
  SUBCASE("gamma = delta = 0") {
    const TinyProblem p = tiny_problem(4, 0.0, 0.0);
    CHECK(compare_gradient(p.model, p.batch, p.noise, p.points, p.config, {}).max_error() <= 1e-4);
  }
}

TEST_CASE("curvature-only loss leaves the encoder untouched") {
  const TinyProblem p = tiny_problem(2, 1.0, 1.0, 0.0);
  const auto lg = loss_gradient(p.model, p.batch, p.noise, p.points, p.config, {false, false, true, true});
  for (const auto& layer : lg.gradient.encoder) {
    CHECK(layer.weight.isZero(0.0));
    CHECK(layer.bias.isZero(0.0));
  }
  bool any = false;
  for (const auto& layer : lg.gradient.decoder) any = any || !layer.weight.isZero(0.0);
  CHECK(any);
}

TEST_CASE("config JSON") {
  TrainingConfig c;
  c.gamma = 2.5;
  c.seed = 12345678901234ull;
  c.decoder_hidden = {7, 3};
  nlohmann::json j = c;
  const TrainingConfig back = j.get<TrainingConfig>();
  CHECK(back.gamma == 2.5);
  CHECK(back.seed == 12345678901234ull);
  CHECK(back.decoder_hidden == std::vector<int>{7, 3});
  CHECK_THROWS_AS(nlohmann::json({{"gama", 1.0}}).get<TrainingConfig>(), ParseError);
  CHECK_THROWS_AS(nlohmann::json({{"beta", "x"}}).get<TrainingConfig>(), ParseError);
  TrainingConfig bad;
  bad.delta = -1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("train") {
  SyntheticSpec spec;
  spec.n = 120;
  spec.ambient_dim = 6;
  spec.noise_sigma = 0.05;
  spec.seed = 17;
  const Matrix data = gen_synthetic(spec).data.matrix;

  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.encoder_hidden = {8};
  cfg.decoder_hidden = {8};
  cfg.m_samples = 4;
  cfg.seed = 5;

  SUBCASE("deterministic") {
    const TrainResult a = train(data, cfg), b = train(data, cfg);
    CHECK(nlohmann::json(checkpoint_to_json(a.model)) == checkpoint_to_json(b.model));
    CHECK(metrics_csv(a.log) == metrics_csv(b.log));
    const auto other = [&] {
      auto c = cfg;
      c.seed = 6;
      return train(data, c);
    }();
    CHECK(metrics_csv(other.log) != metrics_csv(a.log));
  }
  SUBCASE("log is complete and curvature penalty nonnegative") {
    int calls = 0;
    const TrainResult r = train(data, cfg, [&](const EpochMetrics&) { ++calls; });
    CHECK(calls == 3);
    REQUIRE(r.log.size() == 3);
    for (const auto& e : r.log) {
      CHECK(e.pe_mean >= 0.0);
      CHECK(e.ex_mean >= 0.0);
      CHECK(e.pe_max_sqrt * e.pe_max_sqrt >= e.pe_mean * (1 - 1e-12));
    }
    const std::string csv = metrics_csv(r.log);
    CHECK(csv.rfind("epoch,recon,kl,pe_mean,ex_mean,pe_max_sqrt,ex_max_sqrt,loss\n", 0) == 0);
  }
  SUBCASE("reconstruction decreases without curvature terms") {
    int decreased = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto c = cfg;
      c.gamma = c.delta = 0.0;
      c.epochs = 8;
      c.learning_rate = 3e-3;
      c.seed = seed;
      const TrainResult r = train(data, c);
      if (r.log.back().recon < r.log.front().recon) ++decreased;
    }
    CHECK(decreased >= 3);
  }
  SUBCASE("preconditions") {
    auto c = cfg;
    c.batch_size = 500;
    CHECK_THROWS_AS(train(data, c), DomainError);
    CHECK_THROWS_AS(train(Matrix::Zero(1, 6), cfg), DomainError);
  }
  SUBCASE("divergence carries the partial log") {
    auto c = cfg;
    c.learning_rate = 1e300;
    c.epochs = 50;
    try {
      train(data, c);
      FAIL("expected divergence");
    } catch (const DivergedWithLog& e) {
      CHECK(e.partial_log().size() < 50);
      CHECK(e.code() == ErrorCode::kDiverged);
    }
  }
}

TEST_CASE("audit_curvature and encode_means") {
  TrainingConfig cfg;
  cfg.encoder_hidden = {6};
  cfg.decoder_hidden = {6};
  const VaeModel model = init_vae(4, cfg);
  Rng rng(3);
  const Matrix data = random_matrix(rng, 10, 4);
  const Matrix means = encode_means(model, data);
  CHECK(means.row(3).transpose() == encoder_forward(model.encoder, data.row(3).transpose()).mean);
  Rng a(1), b(1);
  const auto audit = audit_curvature(model, data, 8, 2.0, 1e-6, a);
  CHECK(audit.pe_max >= audit.pe_mean);
  CHECK(audit.ex_max >= audit.ex_mean);
  CHECK(audit_curvature(model, data, 8, 2.0, 1e-6, b).ex_mean == audit.ex_mean);
}
