#include <doctest.h>

#include "pseudotrack/errors.hpp"
#include "pseudotrack/learning.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

using namespace pseudotrack;

namespace {

Eigen::VectorXd random_vec(std::mt19937_64& rng, Eigen::Index d, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

// Residual components at least this far from zero keep the L1 term smooth
// within the finite-difference stencil.
bool away_from_kinks(const Eigen::VectorXd& d, double eps = 1e-3) {
  return (d.array().abs() > eps).all();
}

}  // namespace

TEST_CASE("l3d_loss examples") {
  CHECK(l3d_loss(Vec3(1, 2, 3), Vec3(1, 2, 3), 0.0).value == 0.0);
  const auto l = l3d_loss(Vec3(1, 1, 0), Vec3(0, 0, 0), std::log(2.0));
  CHECK(l.value == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(l.value == doctest::Approx(1.6931).epsilon(1e-4));
  REQUIRE(l.gradients.size() == 3);
  CHECK(l.gradients[0].size() == 3);
  CHECK(l.gradients[2].size() == 1);
}

TEST_CASE("l3d_loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 200) {
    const Vec3 o = random_vec(rng, 3), t = random_vec(rng, 3);
    const double s = random_vec(rng, 1)[0];
    if (!away_from_kinks(o - t)) continue;
    ++checked;
    const auto l = l3d_loss(o, t, s);
    Eigen::VectorXd x(7);
    x << o, t, s;
    auto f = [](const Eigen::VectorXd& v) {
      return l3d_loss(v.segment<3>(0), v.segment<3>(3), v[6]).value;
    };
    const Eigen::VectorXd fd = oracle::numeric_gradient(f, x);
    Eigen::VectorXd an(7);
    an << l.gradients[0], l.gradients[1], l.gradients[2];
    CHECK(oracle::rel_error(an, fd) < 1e-5);
  }
}

TEST_CASE("l3d_loss is minimized at sigma^2 = |delta|_1") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const Vec3 o = random_vec(rng, 3), t = random_vec(rng, 3);
    const double l1 = (o - t).lpNorm<1>();
    // Golden-section search over log sigma^2.
    double a = -10.0, b = 10.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
      const double c = b - g * (b - a), d = a + g * (b - a);
      if (l3d_loss(o, t, c).value < l3d_loss(o, t, d).value) b = d; else a = c;
    }
    CHECK(std::abs(std::exp(0.5 * (a + b)) - l1) < 1e-6);
  }
}

TEST_CASE("triplet_loss examples and gradients") {
  const Eigen::VectorXd a = Eigen::VectorXd::Unit(4, 0);
  const Eigen::VectorXd n = a + Eigen::VectorXd::Unit(4, 1);
  CHECK(triplet_loss(a, a, n, 0.3).value == 0.0);
  CHECK(triplet_loss(a, n, a, 0.3).value == doctest::Approx(1.3));
  const auto flat = triplet_loss(a, a + 0.1 * Eigen::VectorXd::Unit(4, 2), n, 0.3);
  for (const auto& g : flat.gradients) CHECK(g.norm() == 0.0);

  std::mt19937_64 rng(13);
  int checked = 0;
  while (checked < 200) {
    const auto x = random_vec(rng, 5), p = random_vec(rng, 5), q = random_vec(rng, 5);
    const double margin = 0.5;
    const double inner = (x - p).norm() - (x - q).norm() + margin;
    if (std::abs(inner) < 1e-3 || (x - p).norm() < 1e-3 || (x - q).norm() < 1e-3) continue;
    ++checked;
    const auto l = triplet_loss(x, p, q, margin);
    Eigen::VectorXd all(15);
    all << x, p, q;
    auto f = [margin](const Eigen::VectorXd& v) {
      return triplet_loss(v.segment<5>(0), v.segment<5>(5), v.segment<5>(10), margin).value;
    };
    Eigen::VectorXd an(15);
    an << l.gradients[0], l.gradients[1], l.gradients[2];
    CHECK(oracle::rel_error(an, oracle::numeric_gradient(f, all)) < 1e-5);
  }
}

TEST_CASE("bce_association_loss examples and gradients") {
  Eigen::MatrixXd y(2, 3);
  y << 1, 0, 0,
       0, 1, 0;
  CHECK(bce_association_loss(y, y).value <= 1e-6);
  CHECK(bce_association_loss(Eigen::MatrixXd::Constant(2, 3, 0.5), y).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(bce_association_loss(Eigen::MatrixXd::Zero(3, 2), y), ShapeMismatch);

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd p(3, 4), gt(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        p(i, j) = u(rng);
        gt(i, j) = coin(rng) ? 1.0 : 0.0;
      }
    const auto l = bce_association_loss(p, gt);
    Eigen::VectorXd x(12);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) x[i * 4 + j] = p(i, j);
    auto f = [&gt](const Eigen::VectorXd& v) {
      Eigen::MatrixXd m(3, 4);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = v[i * 4 + j];
      return bce_association_loss(m, gt).value;
    };
    CHECK(oracle::rel_error(l.gradients[0], oracle::numeric_gradient(f, x)) < 1e-5);
  }
}

TEST_CASE("regressor_forward") {
  std::mt19937_64 rng(15);
  auto w = RegressorWeights::zeros(8);
  w.b2 << 1.0, 2.0, 3.0, -0.5;
  const auto out = regressor_forward(Descriptor::Random(), w);
  CHECK(out.position == Vec3(1, 2, 3));
  CHECK(out.log_var == -0.5);

  // Small inputs through tanh: w2 * tanh(w1 x) ~ linear.
  auto lin = RegressorWeights::zeros(2);
  lin.w1(0, 0) = 1.0;
  lin.w1(1, 1) = 1.0;
  lin.w2(0, 0) = 2.0;
  lin.w2(2, 1) = -3.0;
  Descriptor d = Descriptor::Zero();
  d[0] = 0.5;
  d[1] = 0.25;
  const auto o = regressor_forward(d, lin);
  CHECK(o.position.x() == doctest::Approx(2.0 * std::tanh(0.5)).epsilon(1e-15));
  CHECK(o.position.y() == 0.0);
  CHECK(o.position.z() == doctest::Approx(-3.0 * std::tanh(0.25)).epsilon(1e-15));

  for (int i = 0; i < 100; ++i) {
    const auto r = RegressorWeights::random(16, 100 + i);
    RegressorWeights s = r;
    s.b1 = random_vec(rng, 16);
    s.b2 = random_vec(rng, 4);
    const Descriptor x = random_vec(rng, kDescriptorDim);
    const auto got = regressor_forward(x, s);
    const auto ref = oracle::mlp_forward(s.w1, s.b1, s.w2, s.b2, x);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(got.position[k] - ref[static_cast<std::size_t>(k)]) < 1e-12);
    CHECK(std::abs(got.log_var - ref[3]) < 1e-12);
  }

  RegressorWeights bad = RegressorWeights::zeros(4);
  bad.b2 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(regressor_forward(Descriptor::Zero(), bad), ShapeMismatch);
}

TEST_CASE("regressor backprop matches finite differences") {
  std::mt19937_64 rng(16);
  int checked = 0;
  while (checked < 200) {
    auto w = RegressorWeights::random(8, rng());
    w.b2 = random_vec(rng, 4, 0.3);
    const Descriptor x = random_vec(rng, kDescriptorDim);
    const Vec3 target = random_vec(rng, 3);
    const auto out = regressor_forward(x, w);
    if (!away_from_kinks(out.position - target, 1e-2)) continue;
    ++checked;
    const auto l = regressor_loss(x, target, w);
    auto f = [&](const Eigen::VectorXd& p) {
      return regressor_loss(x, target, RegressorWeights::unflatten(p, 8)).value;
    };
    CHECK(oracle::rel_error(l.gradient.flatten(), oracle::numeric_gradient(f, w.flatten())) < 1e-5);
  }
}

TEST_CASE("train_regressor on a planted linear model") {
  const auto data = fixture::planted_dataset(21, 200);
  TrainConfig cfg;
  cfg.seed = 3;
  const auto r = train_regressor(data, cfg);
  REQUIRE(r.loss_curve.size() == static_cast<std::size_t>(cfg.epochs) + 1);
  const double initial = r.loss_curve.front();
  CHECK(initial > 0.0);
  CHECK(r.loss_curve.back() < 0.05 * initial);
  CHECK(mean_regressor_loss(data, r.weights) == doctest::Approx(r.loss_curve.back()));

  const auto again = train_regressor(data, cfg);
  CHECK(again.weights.flatten() == r.weights.flatten());
  CHECK(again.loss_curve == r.loss_curve);
}

TEST_CASE("train_regressor with zero learning rate") {
  const auto data = fixture::planted_dataset(22, 50);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 20;
  const auto r = train_regressor(data, cfg);
  CHECK(r.weights.flatten() == RegressorWeights::random(cfg.hidden, cfg.seed).flatten());
  for (double v : r.loss_curve) CHECK(v == r.loss_curve.front());
  CHECK_THROWS_AS(train_regressor({}, cfg), ValidationError);
}

TEST_CASE("train_regressor loss is non-increasing with a small step") {
  const auto data = fixture::planted_dataset(23, 100);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 300;
  const auto r = train_regressor(data, cfg);
  for (std::size_t i = 1; i < r.loss_curve.size(); ++i) CHECK(r.loss_curve[i] <= r.loss_curve[i - 1] + 1e-12);
}

TEST_CASE("detection_descriptor") {
  const PinholeIntrinsics K{"c", 500, 500, 320, 240, 640, 480};
  BBox2D b;
  b.left = 100;
  b.top = 200;
  b.width_px = 64;
  b.height_px = 32;
  const auto d = detection_descriptor(b, K);
  CHECK(d[0] == doctest::Approx(132.0 / 640.0));
  CHECK(d[1] == doctest::Approx(216.0 / 480.0));
  CHECK(d[2] == doctest::Approx(0.1));
  CHECK(d[3] == doctest::Approx(32.0 / 480.0));
  CHECK(d[4] == doctest::Approx(2.0));
  CHECK(d[5] == doctest::Approx(232.0 / 480.0));
}
