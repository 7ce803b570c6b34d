#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lgcps/covariance.hpp"
#include "lgcps/lgcp.hpp"
#include "lgcps/pipeline.hpp"

namespace lgcps {

/// Full model state: mean coefficients (p x (q+1), intercept first) and
/// cross-covariance parameters.
struct ModelParams {
  Eigen::MatrixXd eta;
  MultiMaternParams cov;

  int p() const { return cov.p; }
  int q() const { return static_cast<int>(eta.cols()) - 1; }
};

/// Index bookkeeping for the packed, unconstrained parameter vector:
/// [eta row-major | log sigma2_1..p | log beta | correlation angles].
/// The covariance block is all zero at (identity rho, beta = 1, sigma2
/// = 1). Every vector unpacks to valid parameters: sigma2 and beta via
/// exp, rho via the Cholesky-angle construction.
struct PackLayout {
  int p = 0;
  int q = 0;

  int eta_count() const { return p * (q + 1); }
  int angle_count() const { return p * (p - 1) / 2; }
  int size() const { return eta_count() + p + 1 + angle_count(); }
  int eta_index(int type, int coeff) const { return type * (q + 1) + coeff; }
  int sigma2_index(int type) const { return eta_count() + type; }
  int beta_index() const { return eta_count() + p; }
  /// Angle for lower-triangular entry (row, col), row > col.
  int angle_index(int row, int col) const {
    return eta_count() + p + 1 + row * (row - 1) / 2 + col;
  }
};

/// Correlation matrix from unconstrained angles x via the lower
/// Cholesky-angle construction; positive definite for every x, identity
/// at x = 0.
Eigen::MatrixXd correlation_from_angles(const Eigen::VectorXd& x, int p);
Eigen::VectorXd angles_from_correlation(const Eigen::MatrixXd& rho);

Eigen::VectorXd pack(const ModelParams& params);
ModelParams unpack(const Eigen::VectorXd& packed, int p, int q);

struct NelderMeadOptions {
  double tol = 1e-4;       // simplex diameter in packed coordinates
  int max_iters = 2000;
  double init_step = 0.25;
};

struct TracePoint {
  int iteration = 0;
  double value = 0.0;
  Eigen::VectorXd x;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;  // best vertex per iteration
};

/// Derivative-free simplex ascent. The best vertex value is
/// nondecreasing across iterations.
NelderMeadResult nelder_mead_maximize(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& x0,
                                      const NelderMeadOptions& options);

struct FitSettings {
  int s = 10000;
  uint64_t seed = 1;
  bool use_fsa = false;
  int m = 100;
  Eigen::Index block_size = 100;
  NelderMeadOptions nm;
  /// Parameters pinned during optimization: beta, sigma2, sigma2_<i>,
  /// rho (common off-diagonal), rho_<i><j>, eta_<type>_<coeff>.
  std::vector<std::pair<std::string, double>> fixed;
};

struct FitResult {
  ModelParams params;
  double final_mc_loglik = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
  FitSettings settings;
};

/// Monte Carlo likelihood objective with common random numbers: one set
/// of standard-normal draws fixed at construction serves every
/// parameter value, so the objective is deterministic and continuous.
class McObjective {
 public:
  McObjective(const PointPatternDataset& data, const FitSettings& settings);

  double operator()(const ModelParams& params);
  int p() const { return p_; }
  int q() const { return q_; }

 private:
  const PointPatternDataset& data_;
  std::unique_ptr<JointFieldSimulator> sim_;
  int p_;
  int q_;
};

/// Per-type Poisson regression of cell counts on the covariates (IRLS
/// with the integration weights as exposure); the standard eta
/// initializer.
Eigen::MatrixXd poisson_initial_eta(const PointPatternDataset& data, int max_iters = 50);

/// Spec default initialization: Poisson-regression eta, beta 1000 km,
/// rho identity, unit variances.
ModelParams default_init(const PointPatternDataset& data);

/// Maximize the Monte Carlo log-likelihood over the packed parameters by
/// Nelder-Mead, holding any `fixed` coordinates constant.
FitResult fit(const PointPatternDataset& data, const ModelParams& init,
              const FitSettings& settings);

struct ProfilePoint {
  double value = 0.0;
  double loglik = 0.0;
  bool ok = false;
  std::string error;
};

/// Objective slice over one named parameter (beta, sigma2_<i>,
/// rho_<i><j>, eta_<type>_<coeff>), all other parameters held at
/// `params`, common random numbers across the grid.
std::vector<ProfilePoint> profile(const PointPatternDataset& data, const ModelParams& params,
                                  const std::string& which, const std::vector<double>& values,
                                  const FitSettings& settings);

}  // namespace lgcps
