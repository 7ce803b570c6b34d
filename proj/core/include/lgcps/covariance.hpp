#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "lgcps/sphere.hpp"

namespace lgcps {

/// Parsimonious multivariate Matern parameters: p marginal variances, a
/// common spatial range in km, a p x p cross-correlation matrix, and the
/// smoothness, which is fixed at 0.5 for use on the sphere (the
/// exponential special case; validity of the cross-covariance on the
/// sphere holds there).
struct MultiMaternParams {
  int p = 1;
  Eigen::VectorXd sigma2;  // marginal variances, length p
  double beta_km = 1000.0;
  Eigen::MatrixXd rho;  // symmetric, unit diagonal
  double nu = 0.5;

  static MultiMaternParams identity(int p, double beta_km = 1000.0);
};

/// Matern correlation at great-circle distance d. nu = 0.5 is the
/// exponential closed form exp(-d/beta); other nu are supported for
/// Euclidean testing only and are rejected by validate_params.
double matern_corr(double d_km, double beta_km, double nu = 0.5);

/// Cross-covariance between process types i and j at distance d:
/// rho_ij * sigma_i * sigma_j * matern_corr(d, beta, nu).
double cross_cov(int i, int j, double d_km, const MultiMaternParams& params);

/// P = diag(sigma) * rho * diag(sigma).
Eigen::MatrixXd cross_cov_matrix(const MultiMaternParams& params);

/// Spatial correlation matrix K, K_kl = matern_corr(d(s_k, s_l)).
Eigen::MatrixXd spatial_corr_matrix(const std::vector<SpherePoint>& locs,
                                    const MultiMaternParams& params);

struct JointCov {
  Eigen::MatrixXd matrix;           // (p*N) x (p*N), type-major ordering
  bool duplicate_locations = false; // rank deficiency flag
};

/// Joint covariance over all (type, location) pairs in type-major order
/// (all locations of type 1, then type 2, ...): equals P (x) K.
JointCov assemble_joint_cov(const std::vector<SpherePoint>& locs,
                            const MultiMaternParams& params);

/// Returns the list of violated conditions (empty means valid): rho
/// symmetric with unit diagonal, |rho_ij| <= 1, rho PSD to -1e-10,
/// beta > 0, all sigma2 > 0, nu == 0.5.
std::vector<std::string> validate_params(const MultiMaternParams& params);

/// Throws std::invalid_argument listing all violations.
void require_valid(const MultiMaternParams& params);

}  // namespace lgcps
