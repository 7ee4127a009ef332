#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "demos/nn.hpp"
#include "test_util.hpp"

namespace demos {
namespace {

TEST(Mlp, ParameterCountAndZeroInit) {
  const Mlp net({5, 7, 3});
  EXPECT_EQ(net.num_params(), 5u * 7 + 7 + 7 * 3 + 3);
  EXPECT_EQ(net.params().norm(), 0.0);
  EXPECT_EQ(net.num_layers(), 2u);
  EXPECT_THROW(Mlp({4}), std::invalid_argument);
  EXPECT_THROW(Mlp({4, 0, 2}), std::invalid_argument);
}

TEST(Mlp, ForwardMatchesHandComputation) {
  Mlp net({2, 2, 1});
  net.weight(0) << 1.0, -2.0, 0.5, 0.25;
  net.bias(0) << 0.1, -0.3;
  net.weight(1) << 2.0, -1.0;
  net.bias(1) << 0.05;
  Eigen::MatrixXd x(2, 2);
  x << 0.4, -1.0,
       0.3, 0.2;
  const Eigen::MatrixXd y = net.forward(x);
  for (int c = 0; c < 2; ++c) {
    const double x0 = x(0, c);
    const double x1 = x(1, c);
    const double h0 = elu(1.0 * x0 - 2.0 * x1 + 0.1);
    const double h1 = elu(0.5 * x0 + 0.25 * x1 - 0.3);
    EXPECT_NEAR(y(0, c), 2.0 * h0 - h1 + 0.05, 1e-14);
  }
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(3, 1)), std::invalid_argument);
}

TEST(Mlp, EluValues) {
  EXPECT_EQ(elu(2.0), 2.0);
  EXPECT_EQ(elu(0.0), 0.0);
  EXPECT_NEAR(elu(-1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_GT(elu(-50.0), -1.0 - 1e-12);
}

TEST(Mlp, OrthogonalInitHasOrthogonalRows) {
  std::mt19937_64 rng(1);
  const Mlp net = Mlp::orthogonal({6, 10, 4}, 0.01, rng);
  const Eigen::MatrixXd w0 = net.weight(0);
  // 10 x 6: columns orthonormal times sqrt(2).
  EXPECT_LT((w0.transpose() * w0 - 2.0 * Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-12);
  const Eigen::MatrixXd w1 = net.weight(1);
  EXPECT_LT((w1 * w1.transpose() - 1e-4 * Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
  EXPECT_EQ(net.bias(0).norm(), 0.0);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Mlp net({4, 6, 5, 3});
  net.params() = test::random_matrix(static_cast<Eigen::Index>(net.num_params()), 1, rng, 0.7);
  const Eigen::MatrixXd x = test::random_matrix(4, 5, rng);
  const Eigen::MatrixXd w = test::random_matrix(3, 5, rng);
  auto loss = [&](const Mlp& m, const Eigen::MatrixXd& in) {
    return (m.forward(in).array() * w.array()).sum();
  };

  Mlp::Cache cache;
  net.forward(x, &cache);
  Eigen::VectorXd grad;
  const Eigen::MatrixXd dx = net.backward(cache, w, grad);

  const double h = 1e-6;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    Mlp p = net;
    Mlp m = net;
    p.params()[k] += h;
    m.params()[k] -= h;
    const double fd = (loss(p, x) - loss(m, x)) / (2 * h);
    ASSERT_LT(std::abs(fd - grad[k]), 1e-7) << "param " << k;
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::MatrixXd xp = x;
      Eigen::MatrixXd xm = x;
      xp(r, c) += h;
      xm(r, c) -= h;
      EXPECT_LT(std::abs((loss(net, xp) - loss(net, xm)) / (2 * h) - dx(r, c)), 1e-7);
    }
  }
}

TEST(Mlp, BackwardAccumulates) {
  std::mt19937_64 rng(3);
  Mlp net = Mlp::orthogonal({3, 4, 2}, 1.0, rng);
  const Eigen::MatrixXd x = test::random_matrix(3, 2, rng);
  const Eigen::MatrixXd dy = test::random_matrix(2, 2, rng);
  Mlp::Cache cache;
  net.forward(x, &cache);
  Eigen::VectorXd once;
  net.backward(cache, dy, once);
  Eigen::VectorXd twice;
  net.backward(cache, dy, twice);
  net.backward(cache, dy, twice);
  EXPECT_LT((twice - 2.0 * once).norm(), 1e-12);
}

TEST(Gaussian, LogProbAgainstScalarDensity) {
  Eigen::MatrixXd mean(2, 2);
  mean << 0.1, -0.4,
          1.0, 0.0;
  Eigen::VectorXd log_std(2);
  log_std << std::log(0.5), std::log(2.0);
  Eigen::MatrixXd a(2, 2);
  a << 0.3, -0.4,
       -1.0, 3.0;
  const GaussianStats s = gaussian_log_prob_entropy(mean, log_std, a);
  for (int c = 0; c < 2; ++c) {
    double density = 1.0;
    for (int r = 0; r < 2; ++r) {
      const double sd = std::exp(log_std[r]);
      const double z = (a(r, c) - mean(r, c)) / sd;
      density *= std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * std::numbers::pi));
    }
    EXPECT_NEAR(s.log_prob[c], std::log(density), 1e-13);
  }
}

// Differential entropy by midpoint quadrature of -p log p, one dimension at a
// time (the diagonal Gaussian factorizes).
TEST(Gaussian, EntropyMatchesQuadrature) {
  Eigen::VectorXd log_std(3);
  log_std << -1.2, 0.0, 0.7;
  double h = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double sd = std::exp(log_std[d]);
    const int n = 200000;
    const double lo = -12 * sd;
    const double step = 24 * sd / n;
    for (int k = 0; k < n; ++k) {
      const double x = lo + (k + 0.5) * step;
      const double p = std::exp(-0.5 * x * x / (sd * sd)) / (sd * std::sqrt(2 * std::numbers::pi));
      if (p > 0) h -= p * std::log(p) * step;
    }
  }
  EXPECT_NEAR(gaussian_entropy(log_std), h, 1e-8);
  EXPECT_EQ(gaussian_log_prob_entropy(Eigen::MatrixXd::Zero(3, 1), log_std,
                                      Eigen::MatrixXd::Zero(3, 1))
                .entropy,
            gaussian_entropy(log_std));
}

TEST(Gaussian, ShapeMismatchThrows) {
  EXPECT_THROW(gaussian_log_prob_entropy(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3),
                                         Eigen::MatrixXd::Zero(2, 3)),
               std::invalid_argument);
}

TEST(AdamW, ScalarTraceMatchesRecurrence) {
  AdamW opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.5;
  Eigen::VectorXd p(1);
  p << 1.0;
  const double grads[] = {0.3, -0.2, 0.7, 0.0};
  double x = 1.0;
  double m = 0.0;
  double v = 0.0;
  for (int t = 1; t <= 4; ++t) {
    const double g = grads[t - 1];
    ASSERT_TRUE(opt.step(p, Eigen::VectorXd::Constant(1, g)));
    x *= 1.0 - 0.1 * 0.5;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p[0], x, 1e-14) << "step " << t;
  }
  EXPECT_EQ(opt.step_count, 4);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  AdamW opt;
  opt.weight_decay = 0.0;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 5.0, -1e-3, 0.0;
  opt.step(p, g);
  EXPECT_NEAR(p[0], -opt.learning_rate, 1e-9);
  EXPECT_NEAR(p[1], opt.learning_rate, 1e-6);
  EXPECT_EQ(p[2], 0.0);
}

// Decay is applied to the weights directly, not through the moments: with a
// zero gradient the parameters shrink geometrically.
TEST(AdamW, DecayIsDecoupled) {
  AdamW opt;
  opt.learning_rate = 0.01;
  opt.weight_decay = 0.1;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(2, 3.0);
  for (int k = 0; k < 10; ++k) opt.step(p, Eigen::VectorXd::Zero(2));
  EXPECT_NEAR(p[0], 3.0 * std::pow(1.0 - 0.001, 10), 1e-14);
  EXPECT_EQ(opt.second_moment.norm(), 0.0);
}

TEST(AdamW, NonFiniteGradientIsSkipped) {
  AdamW opt;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(2, 1.0);
  Eigen::VectorXd g(2);
  g << 1.0, std::nan("");
  EXPECT_FALSE(opt.step(p, g));
  EXPECT_EQ(p, Eigen::VectorXd::Constant(2, 1.0));
  EXPECT_EQ(opt.step_count, 0);
  EXPECT_THROW(opt.step(p, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

}  // namespace
}  // namespace demos
