#include "lgcps/fsa.hpp"

#include <cmath>

#include "doctest.h"
#include "lgcps/covariance.hpp"
#include "lgcps/rng.hpp"
#include "test_util.hpp"

using namespace lgcps;

namespace {

const Region kBand{-180.0, 180.0, -35.0, 35.0};

RadialCovFn expcov(double sigma2, double beta) {
  return [=](double d) { return sigma2 * std::exp(-d / beta); };
}

}  // namespace

TEST_CASE("knots equal to locations reproduce the dense covariance") {
  const auto locs = testutil::random_points(40, kBand, 21);
  const auto covfn = expcov(1.3, 1465.57);
  const Eigen::MatrixXd sigma = testutil::dense_sigma(locs, covfn);

  const FsaDecomposition fsa = build_fsa(locs, locs, 10, covfn);
  const Eigen::MatrixXd w = implied_cov(fsa);
  CHECK(testutil::max_abs(w - sigma) <= 1e-8 * testutil::max_abs(sigma));
}

TEST_CASE("a single block keeps the full remainder, so W equals Sigma") {
  const auto locs = testutil::random_points(35, kBand, 22);
  const auto knots = testutil::random_points(6, kBand, 23);
  const auto covfn = expcov(1.0, 1200.0);
  const Eigen::MatrixXd sigma = testutil::dense_sigma(locs, covfn);

  const FsaDecomposition fsa = build_fsa(locs, knots, 35, covfn);
  const Eigen::MatrixXd w = implied_cov(fsa);
  CHECK(testutil::max_abs(w - sigma) <= 1e-10 * testutil::max_abs(sigma));
}

TEST_CASE("diagonal of the implied covariance is exact, off-diagonal error bounded") {
  const auto locs = testutil::random_points(40, kBand, 24);
  const auto knots = place_knots(kBand, 5);
  const auto covfn = expcov(2.0, 1465.57);
  const Eigen::MatrixXd sigma = testutil::dense_sigma(locs, covfn);

  const FsaDecomposition fsa = build_fsa(locs, knots, 10, covfn);
  const Eigen::MatrixXd w = implied_cov(fsa);

  CHECK((w - sigma).diagonal().cwiseAbs().maxCoeff() <= 1e-10);
  const double rel = (w - sigma).norm() / sigma.norm();
  CHECK(rel < 0.5);  // coarse rank-5 approximation still has to be sane
  CHECK(testutil::max_abs(w - w.transpose()) <= 1e-12);
  CHECK(testutil::min_eigenvalue(w) >= -1e-8 * w.diagonal().maxCoeff());
}

TEST_CASE("forward solve satisfies U_R^T B = A^T") {
  for (uint32_t rep = 0; rep < 10; ++rep) {
    const auto locs = testutil::random_points(30, kBand, 100 + rep);
    const auto knots = testutil::random_points(8, kBand, 200 + rep);
    const FsaDecomposition fsa = build_fsa(locs, knots, 12, expcov(1.0, 1000.0));
    const Eigen::MatrixXd residual =
        fsa.R_chol.transpose() * fsa.B - fsa.A.transpose();
    CHECK(testutil::max_abs(residual) <= 1e-9 * testutil::max_abs(fsa.A));
  }
}

TEST_CASE("enlarging the knot set does not worsen the Frobenius error") {
  const auto locs = testutil::random_points(50, kBand, 31);
  const auto knots10 = testutil::random_points(10, kBand, 32);
  const std::vector<SpherePoint> knots5(knots10.begin(), knots10.begin() + 5);
  const auto covfn = expcov(1.0, 1465.57);
  const Eigen::MatrixXd sigma = testutil::dense_sigma(locs, covfn);

  const double err5 = (implied_cov(build_fsa(locs, knots5, 10, covfn)) - sigma).norm();
  const double err10 = (implied_cov(build_fsa(locs, knots10, 10, covfn)) - sigma).norm();
  CHECK(err10 <= err5 + 1e-9);
}

TEST_CASE("zero normals produce a zero field") {
  const auto locs = testutil::random_points(20, kBand, 41);
  const auto knots = place_knots(kBand, 4);
  const FsaDecomposition fsa = build_fsa(locs, knots, 7, expcov(1.0, 900.0));
  const Eigen::MatrixXd field =
      fsa_combine(fsa, Eigen::MatrixXd::Zero(1, fsa.m), Eigen::MatrixXd::Zero(1, fsa.n));
  CHECK(testutil::max_abs(field) == 0.0);
}

TEST_CASE("simulated fields are deterministic in the seed") {
  const auto locs = testutil::random_points(15, kBand, 51);
  const auto knots = place_knots(kBand, 4);
  const FsaDecomposition fsa = build_fsa(locs, knots, 5, expcov(1.0, 1100.0));
  const Eigen::MatrixXd a = simulate_fields(fsa, 20, 777);
  const Eigen::MatrixXd b = simulate_fields(fsa, 20, 777);
  const Eigen::MatrixXd c = simulate_fields(fsa, 20, 778);
  CHECK(testutil::max_abs(a - b) == 0.0);
  CHECK(testutil::max_abs(a - c) > 0.0);
}

TEST_CASE("sample covariance of simulated fields matches the implied covariance") {
  // Moderate-replicate version of the sampling identity; the acceptance
  // suite runs the full-scale variant.
  const auto locs = testutil::random_points(25, kBand, 61);
  const auto knots = testutil::random_points(6, kBand, 62);
  const auto covfn = expcov(1.0, 1465.57);
  const FsaDecomposition fsa = build_fsa(locs, knots, 8, covfn);
  const Eigen::MatrixXd w = implied_cov(fsa);
  const Eigen::MatrixXd sigma = testutil::dense_sigma(locs, covfn);

  const int s = 60000;
  const Eigen::MatrixXd fields = simulate_fields(fsa, s, 4242);
  const Eigen::MatrixXd sample = fields.transpose() * fields / static_cast<double>(s);

  double worst_w = 0.0, worst_sigma = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double se = std::sqrt((w(i, i) * w(j, j) + w(i, j) * w(i, j)) / s);
      worst_w = std::max(worst_w, std::abs(sample(i, j) - w(i, j)) / se);
      worst_sigma = std::max(worst_sigma, std::abs(sample(i, j) - sigma(i, j)) / se);
    }
  CHECK(worst_w < 4.5);
  // the sampler targets W, not Sigma: the coarse knot set must be visible
  CHECK(worst_sigma > worst_w);
}

TEST_CASE("exact simulation reproduces a scalar variance within 1 percent") {
  const std::vector<SpherePoint> one{SpherePoint(0.0, 0.0)};
  const Eigen::MatrixXd draws = exact_simulate(one, expcov(4.0, 1000.0), 1000000, 99);
  const double var = draws.col(0).squaredNorm() / static_cast<double>(draws.rows());
  CHECK(std::abs(var - 4.0) < 0.04);
}

TEST_CASE("independent cells stay uncorrelated under exact simulation") {
  // beta so small that off-diagonal correlations vanish
  const auto locs = testutil::random_points(5, kBand, 71);
  const int s = 200000;
  const Eigen::MatrixXd draws = exact_simulate(locs, expcov(1.0, 1e-6), s, 17);
  const Eigen::MatrixXd sample = draws.transpose() * draws / static_cast<double>(s);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      CHECK(std::abs(sample(i, j)) < 4.0 / std::sqrt(static_cast<double>(s)));
}

TEST_CASE("exact and FSA simulators agree distributionally when knots = locations") {
  const auto locs = testutil::random_points(12, kBand, 81);
  const auto covfn = expcov(1.0, 1465.57);
  const int s = 60000;
  const Eigen::MatrixXd fsa_draws = simulate_fields(build_fsa(locs, locs, 4, covfn), s, 5);
  const Eigen::MatrixXd exact_draws = exact_simulate(locs, covfn, s, 6);
  const Eigen::MatrixXd cov_a = fsa_draws.transpose() * fsa_draws / static_cast<double>(s);
  const Eigen::MatrixXd cov_b = exact_draws.transpose() * exact_draws / static_cast<double>(s);
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = 0; j < 12; ++j) {
      const double se = std::sqrt((cov_a(i, i) * cov_a(j, j) + cov_a(i, j) * cov_a(i, j)) *
                                  2.0 / s);
      CHECK(std::abs(cov_a(i, j) - cov_b(i, j)) < 4.5 * se);
    }
}

TEST_CASE("duplicate knots are rejected with the offending pair") {
  auto knots = testutil::random_points(5, kBand, 91);
  knots.push_back(knots[2]);
  const auto locs = testutil::random_points(20, kBand, 92);
  CHECK_THROWS_WITH_AS(build_fsa(locs, knots, 10, expcov(1.0, 1000.0)),
                       doctest::Contains("duplicate knots"), std::invalid_argument);
}

TEST_CASE("materialization cap guards implied_cov") {
  const auto locs = testutil::random_points(30, kBand, 93);
  const auto knots = place_knots(kBand, 4);
  const FsaDecomposition fsa = build_fsa(locs, knots, 10, expcov(1.0, 1000.0));
  CHECK_THROWS(implied_cov(fsa, 10));
}

TEST_CASE("spatial sort produces contiguous latitude bands") {
  const auto locs = testutil::random_points(200, kBand, 94);
  const auto order = spatial_sort_order(locs, 25);
  REQUIRE(order.size() == 200);
  std::vector<bool> seen(200, false);
  for (const auto idx : order) {
    CHECK(!seen[static_cast<size_t>(idx)]);
    seen[static_cast<size_t>(idx)] = true;
  }
}

TEST_CASE("plan reuse matches one-shot decomposition") {
  const auto locs = testutil::random_points(30, kBand, 95);
  const auto knots = testutil::random_points(6, kBand, 96);
  FsaPlan plan(locs, knots, 10);
  for (double beta : {600.0, 1465.57}) {
    const auto covfn = expcov(1.0, beta);
    const Eigen::MatrixXd via_plan = implied_cov(plan.decompose(covfn));
    const Eigen::MatrixXd direct = implied_cov(build_fsa(locs, knots, 10, covfn));
    CHECK(testutil::max_abs(via_plan - direct) == 0.0);
  }
}
