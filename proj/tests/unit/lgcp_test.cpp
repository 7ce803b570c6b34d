#include "lgcps/lgcp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "lgcps/rng.hpp"
#include "test_util.hpp"

using namespace lgcps;

namespace {

IntensitySurface constant_surface(int p, Eigen::Index n, double log_lambda,
                                  const Eigen::VectorXd& weights) {
  IntensitySurface surface;
  surface.log_lambda = Eigen::MatrixXd::Constant(p, n, log_lambda);
  surface.weights = weights;
  return surface;
}

}  // namespace

TEST_CASE("homogeneous log-likelihood closed form") {
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(50);
  const double c = 1.7;
  const auto surface = constant_surface(1, 50, std::log(c), w);
  PointPattern pattern;
  pattern.type_id = 1;
  pattern.events = {3, 17, 17, 42};
  const double expected = 4.0 * std::log(c) - c * 50.0;
  CHECK(loglik_given_lambda(pattern, surface) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("two-cell worked example") {
  IntensitySurface surface;
  surface.log_lambda.resize(1, 2);
  surface.log_lambda << std::log(1.0), std::log(2.0);
  surface.weights.resize(2);
  surface.weights << 1.0, 2.0;
  PointPattern pattern;
  pattern.type_id = 1;
  pattern.events = {1};
  CHECK(loglik_given_lambda(pattern, surface) ==
        doctest::Approx(std::log(2.0) - 5.0).epsilon(1e-14));
}

TEST_CASE("homogeneous MLE identity over a grid of intensities") {
  const Eigen::Index n = 80;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  PointPattern pattern;
  pattern.type_id = 1;
  CounterRng rng(5, stream_id(RngStream::generic, 2));
  for (Eigen::Index k = 0; k < n; ++k)
    if (rng.uniform(0, static_cast<uint64_t>(k)) < 0.3) pattern.events.push_back(k);
  const double n_events = static_cast<double>(pattern.n());
  const double mle = n_events / static_cast<double>(n);

  double best_c = 0.0, best_ll = -1e300;
  for (double c = 0.05; c <= 1.0; c += 0.005) {
    const double ll = loglik_given_lambda(pattern, constant_surface(1, n, std::log(c), w));
    if (ll > best_ll) {
      best_ll = ll;
      best_c = c;
    }
  }
  CHECK(std::abs(best_c - mle) <= 0.005 + 1e-12);
}

TEST_CASE("adding an event in the highest-intensity cell helps most") {
  const Eigen::Index n = 30;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  IntensitySurface surface;
  surface.weights = w;
  surface.log_lambda.resize(1, n);
  CounterRng rng(6, stream_id(RngStream::generic, 3));
  for (Eigen::Index k = 0; k < n; ++k)
    surface.log_lambda(0, k) = rng.normal(0, static_cast<uint64_t>(k));
  Eigen::Index argmax = 0;
  surface.log_lambda.row(0).maxCoeff(&argmax);

  PointPattern base;
  base.type_id = 1;
  base.events = {0, 5};
  const double ll0 = loglik_given_lambda(base, surface);
  double best_gain = -1e300;
  Eigen::Index best_cell = -1;
  for (Eigen::Index k = 0; k < n; ++k) {
    PointPattern extended = base;
    extended.events.push_back(k);
    const double gain = loglik_given_lambda(extended, surface) - ll0;
    if (gain > best_gain) {
      best_gain = gain;
      best_cell = k;
    }
  }
  CHECK(best_cell == argmax);
}

TEST_CASE("logsumexp_mean is exactly permutation invariant and finite") {
  std::vector<double> values{-700.0, -1.5, 3.25, -0.75, 2.0, -650.0, 1.125};
  const double reference = logsumexp_mean(values);
  std::mt19937 shuffler(99);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(values.begin(), values.end(), shuffler);
    CHECK(logsumexp_mean(values) == reference);
  }
  CHECK(std::isfinite(reference));

  std::vector<double> with_inf{-std::numeric_limits<double>::infinity(), 1.0};
  CHECK(std::isfinite(logsumexp_mean(with_inf)));
  std::vector<double> all_inf(4, -std::numeric_limits<double>::infinity());
  CHECK_THROWS(logsumexp_mean(all_inf));
}

TEST_CASE("mean surface assembles intercept and covariate terms") {
  CovariateMatrix covs;
  covs.values.resize(4, 1);
  covs.values << 0.5, -1.0, 2.0, 0.0;
  covs.names = {"q1"};

  Eigen::MatrixXd eta(1, 2);
  eta << 0.0, 0.0;
  CHECK(testutil::max_abs(mean_surface(covs, eta)) == 0.0);

  eta << 1.0, 0.0;
  CHECK(testutil::max_abs(mean_surface(covs, eta) - Eigen::MatrixXd::Ones(1, 4)) == 0.0);

  eta << 0.0, 1.15;
  const Eigen::MatrixXd m = mean_surface(covs, eta);
  for (int k = 0; k < 4; ++k) CHECK(m(0, k) == doctest::Approx(1.15 * covs.values(k, 0)));

  covs.values(2, 0) = std::nan("");
  CHECK_THROWS_WITH_AS(mean_surface(covs, eta), doctest::Contains("cells 2"),
                       std::invalid_argument);
}

TEST_CASE("zero-variance field collapses the MC likelihood to the plug-in value") {
  const auto locs = testutil::random_points(12, Region{-40, 40, -20, 20}, 7);
  MultiMaternParams cov = MultiMaternParams::identity(2, 800.0);
  cov.sigma2.setConstant(1e-300);

  Eigen::MatrixXd mean(2, 12);
  CounterRng rng(8, stream_id(RngStream::generic, 4));
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 12; ++k)
      mean(t, k) = -0.5 + rng.normal(static_cast<uint32_t>(t), static_cast<uint64_t>(k));
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(12);

  std::vector<PointPattern> patterns(2);
  patterns[0].type_id = 1;
  patterns[0].events = {0, 3, 3, 11};
  patterns[1].type_id = 2;
  patterns[1].events = {5};

  IntensitySurface surface;
  surface.log_lambda = mean;
  surface.weights = w;
  const double plug_in = loglik_given_lambda(patterns, surface);

  for (int s : {1, 7, 40}) {
    ExactJointSimulator sim(locs, 2, s, 31337);
    CHECK(mc_loglik(mean, patterns, w, cov, sim) == plug_in);
  }
}

TEST_CASE("MC likelihood is deterministic for a fixed seed") {
  const auto locs = testutil::random_points(10, Region{-40, 40, -20, 20}, 9);
  MultiMaternParams cov = MultiMaternParams::identity(1, 1200.0);
  const Eigen::MatrixXd mean = Eigen::MatrixXd::Constant(1, 10, -0.2);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(10);
  std::vector<PointPattern> patterns(1);
  patterns[0].type_id = 1;
  patterns[0].events = {2, 4, 4};

  ExactJointSimulator sim_a(locs, 1, 500, 2024);
  ExactJointSimulator sim_b(locs, 1, 500, 2024);
  const double a = mc_loglik(mean, patterns, w, cov, sim_a);
  const double b = mc_loglik(mean, patterns, w, cov, sim_b);
  CHECK(a == b);
}

TEST_CASE("MC likelihood matches two-dimensional Gauss-Hermite quadrature") {
  // two cells, one type, known 2x2 covariance
  const std::vector<SpherePoint> locs{SpherePoint(0.0, 0.0), SpherePoint(8.0, 4.0)};
  MultiMaternParams cov = MultiMaternParams::identity(1, 1465.57);
  cov.sigma2 << 0.6;

  Eigen::MatrixXd mean(1, 2);
  mean << -0.3, 0.1;
  Eigen::VectorXd w(2);
  w << 1.0, 1.4;
  std::vector<PointPattern> patterns(1);
  patterns[0].type_id = 1;
  patterns[0].events = {0, 1, 1};

  // oracle: log E exp(l*(Y)) by tensor Gauss-Hermite over Y ~ N(mean, Sigma)
  const double corr = std::exp(-great_circle_distance(locs[0], locs[1]) / cov.beta_km);
  Eigen::MatrixXd sigma(2, 2);
  sigma << 0.6, 0.6 * corr, 0.6 * corr, 0.6;
  const Eigen::MatrixXd lower = robust_lower_factor(sigma);
  const auto gh = testutil::gauss_hermite(80);
  const double sqrt2 = std::sqrt(2.0);
  double integral = 0.0;
  for (int a = 0; a < gh.nodes.size(); ++a)
    for (int b = 0; b < gh.nodes.size(); ++b) {
      Eigen::Vector2d xi(gh.nodes(a), gh.nodes(b));
      const Eigen::Vector2d y = mean.transpose() + sqrt2 * lower * xi;
      const double lstar =
          (y(0) + 2.0 * y(1)) - (w(0) * std::exp(y(0)) + w(1) * std::exp(y(1)));
      integral += gh.weights(a) * gh.weights(b) * std::exp(lstar);
    }
  const double oracle = std::log(integral / kPi);

  ExactJointSimulator sim(locs, 1, 200000, 90210);
  const double mc = mc_loglik(mean, patterns, w, cov, sim);
  CHECK(std::abs(mc - oracle) / std::abs(oracle) <= 3e-3);
}

TEST_CASE("pattern simulation respects the intensity") {
  const Eigen::Index n = 100;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);

  // a guarded huge negative surface yields no events
  const auto empty = simulate_pattern(constant_surface(1, n, -1e30, w), 3);
  CHECK(empty[0].events.empty());

  // constant lambda * |W| = 100: mean count over seeds stays near 100
  const double log_lambda = std::log(100.0 / static_cast<double>(n));
  double total = 0.0;
  const int seeds = 60;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto patterns = simulate_pattern(constant_surface(1, n, log_lambda, w), seed);
    total += static_cast<double>(patterns[0].n());
  }
  const double mean_count = total / seeds;
  CHECK(std::abs(mean_count - 100.0) < 4.0 * std::sqrt(100.0 / seeds));

  // doubling lambda doubles the expected count
  double total2 = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto patterns =
        simulate_pattern(constant_surface(1, n, log_lambda + std::log(2.0), w), seed);
    total2 += static_cast<double>(patterns[0].n());
  }
  const double ratio = total2 / total;
  CHECK(ratio > 1.7);
  CHECK(ratio < 2.3);
}

TEST_CASE("pattern simulation guards overflowing intensities") {
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
  CHECK_THROWS(simulate_pattern(constant_surface(1, 3, 40.0, w), 1));
}

TEST_CASE("occurrence mode caps each cell at one event") {
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(20);
  const auto surface = constant_surface(1, 20, std::log(5.0), w);
  const auto occurrence = simulate_pattern(surface, 11, true);
  std::vector<int> counts(20, 0);
  for (Eigen::Index cell : occurrence[0].events) counts[static_cast<size_t>(cell)] += 1;
  for (int c : counts) CHECK(c <= 1);

  const auto full = simulate_pattern(surface, 11, false);
  CHECK(full[0].n() >= occurrence[0].n());
}
