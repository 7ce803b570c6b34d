#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "lgcps/sphere.hpp"

namespace lgcps {

/// Isotropic covariance as a function of great-circle distance in km.
using RadialCovFn = std::function<double(double)>;

/// Full-scale decomposition of an N x N covariance: a predictive-process
/// low-rank part A R^-1 A^T over m knots plus a block-diagonal remainder
/// V whose blocks are factored independently. Rows/columns live in a
/// spatially coherent order (latitude bands, then longitude); `perm`
/// maps that internal position back to the caller's location index.
struct FsaDecomposition {
  std::vector<SpherePoint> knots;
  Eigen::MatrixXd A;       // N x m cross-covariance, internal row order
  Eigen::MatrixXd R_chol;  // m x m upper factor U_R of knot covariance
  Eigen::MatrixXd B;       // m x N, solves U_R^T B = A^T
  std::vector<Eigen::MatrixXd> block_factors;  // F_b with V_b = F_b^T F_b
  std::vector<Eigen::Index> block_start;       // offsets into internal order
  std::vector<Eigen::Index> block_size;
  std::vector<Eigen::Index> perm;  // internal position -> caller index
  double jitter_used = 0.0;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
};

/// Caches the distance geometry of (locations, knots, blocks) so that
/// decompositions for many covariance functions (e.g. a range-parameter
/// sweep) reuse the same distances. Construction is the only O(N m +
/// N b) distance pass.
class FsaPlan {
 public:
  FsaPlan(std::vector<SpherePoint> locs, std::vector<SpherePoint> knots,
          Eigen::Index block_size);

  FsaDecomposition decompose(const RadialCovFn& covfn) const;

  Eigen::Index n() const { return n_; }
  Eigen::Index m() const { return m_; }
  const std::vector<Eigen::Index>& perm() const { return perm_; }

 private:
  std::vector<SpherePoint> locs_;   // internal order
  std::vector<SpherePoint> knots_;
  std::vector<Eigen::Index> perm_;  // internal position -> caller index
  std::vector<Eigen::Index> block_start_;
  std::vector<Eigen::Index> block_sizes_;
  Eigen::MatrixXd dist_a_;                 // N x m
  Eigen::MatrixXd dist_r_;                 // m x m
  std::vector<Eigen::MatrixXd> dist_blk_;  // per-block pairwise distances
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
};

FsaDecomposition build_fsa(const std::vector<SpherePoint>& locs,
                           const std::vector<SpherePoint>& knots,
                           Eigen::Index block_size, const RadialCovFn& covfn);

/// Materialize W = A R^-1 A^T + V in caller order. Test/diagnostic path;
/// refuses N above the cap.
Eigen::MatrixXd implied_cov(const FsaDecomposition& fsa, Eigen::Index max_n = 4000);

/// S0 B + S1 U_V with explicit normals (S0 is s x m, S1 is s x N in
/// caller order). Rows of the result are i.i.d. N(0, W) when the inputs
/// are i.i.d. standard normal. This is the deterministic kernel behind
/// simulate_fields and the common-random-numbers objective.
Eigen::MatrixXd fsa_combine(const FsaDecomposition& fsa, const Eigen::MatrixXd& s0,
                            const Eigen::MatrixXd& s1);

/// s replicates of a zero-mean field with covariance W, rows i.i.d.,
/// deterministic in (seed, type_index).
Eigen::MatrixXd simulate_fields(const FsaDecomposition& fsa, int s, uint64_t seed,
                                int type_index = 0);

/// Upper Cholesky factor of covfn over locs with an escalating jitter
/// ladder (1e-10, 1e-8, 1e-6 of the mean diagonal).
Eigen::MatrixXd dense_cov_cholesky(const std::vector<SpherePoint>& locs,
                                   const RadialCovFn& covfn);

/// s replicates of a zero-mean field with the exact dense covariance.
Eigen::MatrixXd exact_simulate(const std::vector<SpherePoint>& locs, const RadialCovFn& covfn,
                               int s, uint64_t seed, int type_index = 0);

/// Internal-order index partition (latitude bands then longitude) used
/// by FsaPlan; exposed for tests.
std::vector<Eigen::Index> spatial_sort_order(const std::vector<SpherePoint>& locs,
                                             Eigen::Index block_size);

}  // namespace lgcps
