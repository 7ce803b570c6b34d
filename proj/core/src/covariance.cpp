#include "lgcps/covariance.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace lgcps {

MultiMaternParams MultiMaternParams::identity(int p, double beta_km) {
  MultiMaternParams params;
  params.p = p;
  params.sigma2 = Eigen::VectorXd::Ones(p);
  params.beta_km = beta_km;
  params.rho = Eigen::MatrixXd::Identity(p, p);
  return params;
}

double matern_corr(double d_km, double beta_km, double nu) {
  if (!(beta_km > 0.0)) throw std::invalid_argument("matern_corr: beta must be > 0");
  if (!(d_km >= 0.0)) throw std::invalid_argument("matern_corr: distance must be >= 0");
  const double x = d_km / beta_km;
  if (nu == 0.5) return std::exp(-x);
  if (!(nu > 0.0)) throw std::invalid_argument("matern_corr: nu must be > 0");
  if (x < 1e-12) return 1.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) *
         std::cyl_bessel_k(nu, x);
}

double cross_cov(int i, int j, double d_km, const MultiMaternParams& params) {
  if (i < 0 || i >= params.p || j < 0 || j >= params.p)
    throw std::out_of_range("cross_cov: type index out of range");
  const double rho_ij = (i == j) ? 1.0 : params.rho(i, j);
  return rho_ij * std::sqrt(params.sigma2(i) * params.sigma2(j)) *
         matern_corr(d_km, params.beta_km, params.nu);
}

Eigen::MatrixXd cross_cov_matrix(const MultiMaternParams& params) {
  const Eigen::VectorXd sigma = params.sigma2.cwiseSqrt();
  Eigen::MatrixXd cross(params.p, params.p);
  for (int i = 0; i < params.p; ++i) {
    cross(i, i) = params.sigma2(i);
    for (int j = 0; j < i; ++j) {
      const double value = params.rho(i, j) * (sigma(i) * sigma(j));
      cross(i, j) = value;
      cross(j, i) = value;
    }
  }
  return cross;
}

Eigen::MatrixXd spatial_corr_matrix(const std::vector<SpherePoint>& locs,
                                    const MultiMaternParams& params) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd corr(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    corr(k, k) = 1.0;
    for (Eigen::Index l = 0; l < k; ++l) {
      const double c =
          matern_corr(great_circle_distance(locs[k], locs[l]), params.beta_km, params.nu);
      corr(k, l) = c;
      corr(l, k) = c;
    }
  }
  return corr;
}

JointCov assemble_joint_cov(const std::vector<SpherePoint>& locs,
                            const MultiMaternParams& params) {
  if (locs.empty()) throw std::invalid_argument("assemble_joint_cov: no locations");
  require_valid(params);

  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  JointCov result;
  const Eigen::MatrixXd corr = spatial_corr_matrix(locs, params);
  for (Eigen::Index k = 0; k < n && !result.duplicate_locations; ++k)
    for (Eigen::Index l = 0; l < k; ++l)
      if (great_circle_distance(locs[k], locs[l]) == 0.0) {
        result.duplicate_locations = true;
        break;
      }

  const Eigen::MatrixXd cross = cross_cov_matrix(params);
  result.matrix.resize(params.p * n, params.p * n);
  for (int i = 0; i < params.p; ++i)
    for (int j = 0; j < params.p; ++j)
      result.matrix.block(i * n, j * n, n, n) = cross(i, j) * corr;
  return result;
}

std::vector<std::string> validate_params(const MultiMaternParams& params) {
  std::vector<std::string> violations;
  if (params.p < 1) {
    violations.push_back("p must be >= 1");
    return violations;
  }
  if (params.sigma2.size() != params.p)
    violations.push_back("sigma2 must have length p");
  else
    for (int i = 0; i < params.p; ++i)
      if (!(params.sigma2(i) > 0.0))
        violations.push_back("sigma2[" + std::to_string(i) + "] must be > 0");
  if (!(params.beta_km > 0.0)) violations.push_back("beta_km must be > 0");
  if (params.nu != 0.5) violations.push_back("nu must equal 0.5 on the sphere");

  if (params.rho.rows() != params.p || params.rho.cols() != params.p) {
    violations.push_back("rho must be p x p");
    return violations;
  }
  bool shape_ok = true;
  for (int i = 0; i < params.p; ++i) {
    if (std::abs(params.rho(i, i) - 1.0) > 1e-12) {
      violations.push_back("rho diagonal must be 1");
      shape_ok = false;
      break;
    }
  }
  for (int i = 0; i < params.p && shape_ok; ++i)
    for (int j = 0; j < i; ++j) {
      if (std::abs(params.rho(i, j) - params.rho(j, i)) > 1e-12) {
        violations.push_back("rho must be symmetric");
        shape_ok = false;
        break;
      }
      if (std::abs(params.rho(i, j)) > 1.0 + 1e-12) {
        violations.push_back("|rho_ij| must be <= 1");
        shape_ok = false;
        break;
      }
    }
  if (shape_ok) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(params.rho,
                                                      Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
      violations.push_back("rho must be positive semidefinite (min eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  return violations;
}

void require_valid(const MultiMaternParams& params) {
  const auto violations = validate_params(params);
  if (violations.empty()) return;
  std::string msg = "invalid covariance parameters:";
  for (const auto& v : violations) msg += " " + v + ";";
  throw std::invalid_argument(msg);
}

}  // namespace lgcps
