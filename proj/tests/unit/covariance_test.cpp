#include "lgcps/covariance.hpp"

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

using namespace lgcps;

TEST_CASE("exponential correlation closed form") {
  CHECK(matern_corr(0.0, 1465.57) == 1.0);
  CHECK(matern_corr(1465.57, 1465.57) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(matern_corr(2.0 * 1465.57, 1465.57) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(matern_corr(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(matern_corr(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("general-nu path agrees with known closed forms") {
  // nu = 0.5 Bessel route vs the exponential branch
  for (double x : {0.1, 0.7, 1.9, 4.2}) {
    const double bessel = std::pow(2.0, 0.5) / std::tgamma(0.5) * std::sqrt(x) *
                          std::cyl_bessel_k(0.5, x);
    CHECK(matern_corr(x, 1.0) == doctest::Approx(bessel).epsilon(1e-10));
  }
  // nu = 1.5 reduces to (1 + x) exp(-x)
  for (double x : {0.2, 1.0, 3.3}) {
    CHECK(matern_corr(x, 1.0, 1.5) == doctest::Approx((1.0 + x) * std::exp(-x)).epsilon(1e-10));
  }
}

TEST_CASE("correlation is nonincreasing in distance") {
  double last = 1.0;
  for (int i = 1; i <= 60; ++i) {
    const double c = matern_corr(i * 150.0, 1465.57);
    CHECK(c <= last);
    last = c;
  }
}

TEST_CASE("cross covariance values") {
  MultiMaternParams params = MultiMaternParams::identity(3, 1465.57);
  params.rho(0, 1) = params.rho(1, 0) = 0.95;  // Str-DC cross-correlation
  params.sigma2 << 2.0, 1.0, 0.5;

  CHECK(cross_cov(0, 0, 0.0, params) == doctest::Approx(2.0));
  CHECK(cross_cov(2, 2, 0.0, params) == doctest::Approx(0.5));
  params.sigma2 << 1.0, 1.0, 1.0;
  CHECK(cross_cov(0, 1, 0.0, params) == doctest::Approx(0.95));
  CHECK(cross_cov(0, 2, 321.0, params) == 0.0);  // rho_13 = 0
  CHECK_THROWS_AS(cross_cov(0, 3, 0.0, params), std::out_of_range);
}

TEST_CASE("joint covariance of a single location is the cross matrix") {
  MultiMaternParams params = MultiMaternParams::identity(2, 900.0);
  params.sigma2 << 4.0, 9.0;
  params.rho(0, 1) = params.rho(1, 0) = -0.3;
  const auto joint = assemble_joint_cov({SpherePoint(12.0, -7.0)}, params);
  CHECK(testutil::max_abs(joint.matrix - cross_cov_matrix(params)) < 1e-14);
}

TEST_CASE("univariate joint covariance is the scaled correlation") {
  MultiMaternParams params = MultiMaternParams::identity(1, 1200.0);
  params.sigma2 << 3.5;
  const auto pts = testutil::random_points(6, Region{-30, 40, -20, 20}, 11);
  const auto joint = assemble_joint_cov(pts, params);
  const Eigen::MatrixXd expected = 3.5 * spatial_corr_matrix(pts, params);
  CHECK(testutil::max_abs(joint.matrix - expected) < 1e-12);
}

TEST_CASE("joint covariance equals elementwise cross_cov construction") {
  MultiMaternParams params = MultiMaternParams::identity(3, 1100.0);
  params.sigma2 << 1.4, 0.8, 2.2;
  params.rho(0, 1) = params.rho(1, 0) = 0.6;
  params.rho(0, 2) = params.rho(2, 0) = -0.25;
  params.rho(1, 2) = params.rho(2, 1) = 0.1;
  const auto pts = testutil::random_points(3, Region{-120, -60, -10, 25}, 5);
  const auto joint = assemble_joint_cov(pts, params);

  const Eigen::Index n = 3;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = 0; l < n; ++l) {
          const double d = great_circle_distance(pts[static_cast<size_t>(k)],
                                                 pts[static_cast<size_t>(l)]);
          CHECK(joint.matrix(i * n + k, j * n + l) ==
                doctest::Approx(cross_cov(i, j, d, params)).epsilon(1e-12));
        }
}

TEST_CASE("joint covariance is the Kronecker product of cross and spatial parts") {
  MultiMaternParams params = MultiMaternParams::identity(3, 1465.57);
  params.sigma2 << 1.0, 2.0, 0.7;
  params.rho(0, 1) = params.rho(1, 0) = 0.95;
  params.rho(0, 2) = params.rho(2, 0) = -0.11;
  params.rho(1, 2) = params.rho(2, 1) = 0.18;
  const auto pts = testutil::random_points(25, Region{-180, 180, -35, 35}, 77);
  const auto joint = assemble_joint_cov(pts, params);

  const Eigen::MatrixXd cross = cross_cov_matrix(params);
  const Eigen::MatrixXd corr = spatial_corr_matrix(pts, params);
  Eigen::MatrixXd kron(3 * 25, 3 * 25);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) kron.block(i * 25, j * 25, 25, 25) = cross(i, j) * corr;

  const double scale = testutil::max_abs(kron);
  CHECK(testutil::max_abs(joint.matrix - kron) <= 1e-12 * scale);
  CHECK(testutil::max_abs(joint.matrix - joint.matrix.transpose()) == 0.0);
}

TEST_CASE("duplicate locations are flagged") {
  MultiMaternParams params = MultiMaternParams::identity(1);
  const SpherePoint p(5.0, 5.0);
  CHECK_FALSE(assemble_joint_cov({p, SpherePoint(6.0, 5.0)}, params).duplicate_locations);
  CHECK(assemble_joint_cov({p, p}, params).duplicate_locations);
}

TEST_CASE("parameter validation catches each violation") {
  CHECK(validate_params(MultiMaternParams::identity(3)).empty());

  MultiMaternParams compound = MultiMaternParams::identity(3);
  compound.rho << 1, 0.99, 0.99, 0.99, 1, 0.99, 0.99, 0.99, 1;
  // compound-symmetric eigenvalues {1 + 2c, 1 - c, 1 - c} = {2.98, 0.01, 0.01}
  CHECK(validate_params(compound).empty());

  MultiMaternParams bad = MultiMaternParams::identity(3);
  bad.rho << 1, 0.9, 0.9, 0.9, 1, -0.9, 0.9, -0.9, 1;
  CHECK_FALSE(validate_params(bad).empty());

  MultiMaternParams asym = MultiMaternParams::identity(2);
  asym.rho(0, 1) = 0.4;
  CHECK_FALSE(validate_params(asym).empty());

  MultiMaternParams nu_off = MultiMaternParams::identity(2);
  nu_off.nu = 1.5;
  CHECK_FALSE(validate_params(nu_off).empty());

  MultiMaternParams neg_beta = MultiMaternParams::identity(2);
  neg_beta.beta_km = -5.0;
  CHECK_FALSE(validate_params(neg_beta).empty());

  MultiMaternParams neg_var = MultiMaternParams::identity(2);
  neg_var.sigma2(1) = 0.0;
  CHECK_FALSE(validate_params(neg_var).empty());

  CHECK_THROWS_AS(require_valid(neg_var), std::invalid_argument);
}

TEST_CASE("assembled joint covariance stays positive semidefinite") {
  CounterRng rng(3141, stream_id(RngStream::generic, 1));
  for (uint32_t rep = 0; rep < 50; ++rep) {
    MultiMaternParams params = MultiMaternParams::identity(3);
    params.beta_km = 200.0 + 4000.0 * rng.uniform(rep, 0);
    for (int i = 0; i < 3; ++i) params.sigma2(i) = 0.2 + 3.0 * rng.uniform(rep, 1 + i);
    // correlations through a random Cholesky factor keep rho valid
    Eigen::MatrixXd l(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) l(i, j) = rng.normal(rep, 10 + 3 * i + j);
    Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 3; ++i) {
      l.row(i).tail(2 - i).setZero();
      l.row(i) /= l.row(i).norm();
    }
    rho = l * l.transpose();
    rho.diagonal().setOnes();
    params.rho = 0.5 * (rho + rho.transpose());
    REQUIRE(validate_params(params).empty());

    const auto pts = testutil::random_points(12, Region{-180, 180, -35, 35}, 1000 + rep);
    const auto joint = assemble_joint_cov(pts, params);
    const double floor = -1e-8 * joint.matrix.diagonal().maxCoeff();
    CHECK(testutil::min_eigenvalue(joint.matrix) >= floor);
  }
}
