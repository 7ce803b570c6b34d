#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "lgcps/covariance.hpp"
#include "lgcps/fsa.hpp"
#include "lgcps/sphere.hpp"

namespace lgcps {

/// Events of one process type, snapped to grid cells. Indices may repeat
/// (several events in one cell).
struct PointPattern {
  int type_id = 1;  // 1-based
  std::vector<Eigen::Index> events;

  long n() const { return static_cast<long>(events.size()); }
};

/// Named covariate fields aligned to grid cells, one column each.
struct CovariateMatrix {
  Eigen::MatrixXd values;  // N x q
  std::vector<std::string> names;

  Eigen::Index n_cells() const { return values.rows(); }
  int q() const { return static_cast<int>(values.cols()); }
};

/// Discretized log-intensity of all types plus the integration weights of
/// the cells it lives on.
struct IntensitySurface {
  Eigen::MatrixXd log_lambda;  // p x N
  Eigen::VectorXd weights;     // per-cell integration weights

  int p() const { return static_cast<int>(log_lambda.rows()); }
  Eigen::Index n_cells() const { return log_lambda.cols(); }
};

/// Linear mean of the log intensity: eta is p x (q+1) with the intercept
/// in column 0. Throws if any covariate value is missing, listing the
/// offending cells.
Eigen::MatrixXd mean_surface(const CovariateMatrix& covariates, const Eigen::MatrixXd& eta);

/// Log-likelihood of one pattern given the surface:
/// sum_events Y_type(cell) - sum_cells exp(Y_type(cell)) * weight(cell).
double loglik_given_lambda(const PointPattern& pattern, const IntensitySurface& surface);

/// Joint version, summed over types.
double loglik_given_lambda(const std::vector<PointPattern>& patterns,
                           const IntensitySurface& surface);

/// log of the mean of exp(values), evaluated by log-sum-exp with the
/// addends sorted first, so the result is exactly invariant under
/// permutation of the inputs. Throws if every value is -inf.
double logsumexp_mean(std::vector<double> values);

/// Produces the zero-mean Gaussian field replicates behind the Monte
/// Carlo likelihood. The standard-normal draws are fixed at construction
/// (keyed by seed only), so two calls to set_params with different
/// covariance parameters reuse the same underlying randomness: the
/// objective built on top is deterministic and continuous in the
/// parameters.
class JointFieldSimulator {
 public:
  virtual ~JointFieldSimulator() = default;

  /// Rebuild factors for new covariance parameters and refresh fields().
  virtual void set_params(const MultiMaternParams& params) = 0;

  /// One s x N matrix per type; row j of the stack across types is a
  /// draw from N(0, P (x) K).
  virtual const std::vector<Eigen::MatrixXd>& fields() const = 0;

  virtual int replicates() const = 0;
  virtual Eigen::Index n_cells() const = 0;
  virtual int types() const = 0;
  virtual uint64_t seed() const = 0;
};

/// Dense-Cholesky simulator for moderate N (no covariance approximation).
class ExactJointSimulator final : public JointFieldSimulator {
 public:
  ExactJointSimulator(std::vector<SpherePoint> locs, int p, int s, uint64_t seed);

  void set_params(const MultiMaternParams& params) override;
  const std::vector<Eigen::MatrixXd>& fields() const override { return mixed_; }
  int replicates() const override { return s_; }
  Eigen::Index n_cells() const override { return static_cast<Eigen::Index>(locs_.size()); }
  int types() const override { return p_; }
  uint64_t seed() const override { return seed_; }

 private:
  std::vector<SpherePoint> locs_;
  Eigen::MatrixXd dist_;
  std::vector<Eigen::MatrixXd> z_;        // fixed standard normals
  std::vector<Eigen::MatrixXd> spatial_;  // Z * U(beta)
  std::vector<Eigen::MatrixXd> mixed_;
  double cached_beta_ = -1.0;
  double cached_nu_ = -1.0;
  int p_;
  int s_;
  uint64_t seed_;
};

/// Full-scale-approximation simulator for large N.
class FsaJointSimulator final : public JointFieldSimulator {
 public:
  FsaJointSimulator(std::vector<SpherePoint> locs, std::vector<SpherePoint> knots,
                    Eigen::Index block_size, int p, int s, uint64_t seed);

  void set_params(const MultiMaternParams& params) override;
  const std::vector<Eigen::MatrixXd>& fields() const override { return mixed_; }
  int replicates() const override { return s_; }
  Eigen::Index n_cells() const override { return plan_.n(); }
  int types() const override { return p_; }
  uint64_t seed() const override { return seed_; }

 private:
  FsaPlan plan_;
  std::vector<Eigen::MatrixXd> z0_;
  std::vector<Eigen::MatrixXd> z1_;
  std::vector<Eigen::MatrixXd> spatial_;
  std::vector<Eigen::MatrixXd> mixed_;
  double cached_beta_ = -1.0;
  double cached_nu_ = -1.0;
  int p_;
  int s_;
  uint64_t seed_;
};

/// Monte Carlo log-likelihood: log of the average over simulated
/// intensity realizations of the likelihood given each realization,
/// computed through log-sum-exp. Deterministic for a fixed simulator
/// seed and invariant to replicate order.
double mc_loglik(const Eigen::MatrixXd& mean_log_intensity,
                 const std::vector<PointPattern>& patterns, const Eigen::VectorXd& weights,
                 const MultiMaternParams& cov, JointFieldSimulator& sim);

/// Draw one pattern per type from the Poisson counts implied by the
/// surface. With occurrence_only, a cell contributes at most one event.
std::vector<PointPattern> simulate_pattern(const IntensitySurface& surface, uint64_t seed,
                                           bool occurrence_only = false);

/// Lower factor L with L L^T = P (Cholesky, or an eigenvalue square root
/// when P is only semidefinite).
Eigen::MatrixXd robust_lower_factor(const Eigen::MatrixXd& psd);

}  // namespace lgcps
