#include "lgcps/lgcp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lgcps/parallel.hpp"
#include "lgcps/rng.hpp"

namespace lgcps {

namespace {

constexpr Eigen::Index kReplicateChunk = 64;
constexpr double kIntensityCap = 1e12;

void check_pattern(const PointPattern& pattern, int p, Eigen::Index n) {
  if (pattern.type_id < 1 || pattern.type_id > p)
    throw std::invalid_argument("pattern type_id " + std::to_string(pattern.type_id) +
                                " outside 1.." + std::to_string(p));
  for (Eigen::Index cell : pattern.events)
    if (cell < 0 || cell >= n)
      throw std::out_of_range("pattern event cell " + std::to_string(cell) +
                              " outside grid of size " + std::to_string(n));
}

/// Replicate log-likelihoods for all joint draws; fields may be empty
/// (plug-in at the mean).
std::vector<double> replicate_logliks(const Eigen::MatrixXd& mean,
                                      const std::vector<const Eigen::MatrixXd*>& fields, int s,
                                      const std::vector<PointPattern>& patterns,
                                      const Eigen::VectorXd& weights) {
  const int p = static_cast<int>(mean.rows());
  const Eigen::Index n = mean.cols();
  std::vector<double> l(static_cast<size_t>(s), 0.0);
  detail::parallel_chunks(s, kReplicateChunk, [&](Eigen::Index lo, Eigen::Index hi) {
    Eigen::ArrayXd y(n);
    for (Eigen::Index j = lo; j < hi; ++j) {
      double lj = 0.0;
      for (int t = 0; t < p; ++t) {
        if (fields.empty())
          y = mean.row(t).transpose().array();
        else
          y = mean.row(t).transpose().array() + fields[t]->row(j).transpose().array();
        for (Eigen::Index cell : patterns[t].events) lj += y(cell);
        lj -= (y.exp() * weights.array()).sum();
      }
      l[static_cast<size_t>(j)] = lj;
    }
  });
  return l;
}

std::vector<PointPattern> ordered_patterns(const std::vector<PointPattern>& patterns, int p,
                                           Eigen::Index n) {
  std::vector<PointPattern> out(static_cast<size_t>(p));
  std::vector<bool> seen(static_cast<size_t>(p), false);
  for (const auto& pat : patterns) {
    check_pattern(pat, p, n);
    const size_t t = static_cast<size_t>(pat.type_id - 1);
    if (seen[t]) throw std::invalid_argument("duplicate pattern for type " + std::to_string(pat.type_id));
    out[t] = pat;
    seen[t] = true;
  }
  for (size_t t = 0; t < out.size(); ++t) out[t].type_id = static_cast<int>(t + 1);
  return out;
}

}  // namespace

Eigen::MatrixXd mean_surface(const CovariateMatrix& covariates, const Eigen::MatrixXd& eta) {
  const Eigen::Index n = covariates.n_cells();
  const int q = covariates.q();
  if (eta.cols() != q + 1)
    throw std::invalid_argument("mean_surface: eta has " + std::to_string(eta.cols()) +
                                " columns, expected q+1 = " + std::to_string(q + 1));

  std::vector<Eigen::Index> bad;
  for (Eigen::Index k = 0; k < n && bad.size() < 8; ++k)
    if (!covariates.values.row(k).allFinite()) bad.push_back(k);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "mean_surface: missing covariate values at cells";
    for (Eigen::Index k : bad) msg << " " << k;
    if (bad.size() == 8) msg << " ...";
    throw std::invalid_argument(msg.str());
  }

  Eigen::MatrixXd mean = eta.col(0) * Eigen::RowVectorXd::Ones(n);
  if (q > 0) mean.noalias() += eta.rightCols(q) * covariates.values.transpose();
  return mean;
}

double loglik_given_lambda(const PointPattern& pattern, const IntensitySurface& surface) {
  check_pattern(pattern, surface.p(), surface.n_cells());
  if (surface.weights.size() != surface.n_cells())
    throw std::invalid_argument("loglik_given_lambda: weights/surface size mismatch");
  const Eigen::ArrayXd y = surface.log_lambda.row(pattern.type_id - 1).transpose().array();
  double ll = 0.0;
  for (Eigen::Index cell : pattern.events) ll += y(cell);
  ll -= (y.exp() * surface.weights.array()).sum();
  return ll;
}

double loglik_given_lambda(const std::vector<PointPattern>& patterns,
                           const IntensitySurface& surface) {
  double ll = 0.0;
  for (const auto& pattern : patterns) ll += loglik_given_lambda(pattern, surface);
  return ll;
}

double logsumexp_mean(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("logsumexp_mean: no values");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isnan(mx)) throw std::runtime_error("logsumexp_mean: NaN replicate log-likelihood");
  if (mx == -std::numeric_limits<double>::infinity())
    throw std::runtime_error("logsumexp_mean: all replicate likelihoods vanished "
                             "(degenerate surface)");
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum / static_cast<double>(values.size()));
}

Eigen::MatrixXd robust_lower_factor(const Eigen::MatrixXd& psd) {
  Eigen::LLT<Eigen::MatrixXd> llt(psd);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(psd);
  const double floor = -1e-10 * std::max(1.0, psd.diagonal().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor)
    throw std::runtime_error("robust_lower_factor: matrix is not positive semidefinite");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

namespace {

void mix_fields(const std::vector<Eigen::MatrixXd>& spatial, const MultiMaternParams& params,
                std::vector<Eigen::MatrixXd>& mixed) {
  const int p = params.p;
  const Eigen::MatrixXd lower = robust_lower_factor(cross_cov_matrix(params));
  mixed.resize(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) {
    mixed[i] = lower(i, 0) * spatial[0];
    for (int l = 1; l <= i; ++l)
      if (lower(i, l) != 0.0) mixed[i].noalias() += lower(i, l) * spatial[l];
  }
}

}  // namespace

ExactJointSimulator::ExactJointSimulator(std::vector<SpherePoint> locs, int p, int s,
                                         uint64_t seed)
    : locs_(std::move(locs)), p_(p), s_(s), seed_(seed) {
  if (p_ < 1 || s_ < 1) throw std::invalid_argument("simulator: need p >= 1 and s >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(locs_.size());
  if (n < 1) throw std::invalid_argument("simulator: no locations");
  dist_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist_(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = great_circle_distance(locs_[i], locs_[j]);
      dist_(i, j) = d;
      dist_(j, i) = d;
    }
  }
  z_.resize(static_cast<size_t>(p_));
  for (int t = 0; t < p_; ++t) {
    z_[t].resize(s_, n);
    CounterRng(seed_, stream_id(RngStream::fine_field, t)).fill_normals(z_[t]);
  }
}

void ExactJointSimulator::set_params(const MultiMaternParams& params) {
  if (params.p != p_) throw std::invalid_argument("simulator: type count mismatch");
  if (params.beta_km != cached_beta_ || params.nu != cached_nu_) {
    const Eigen::MatrixXd corr =
        dist_.unaryExpr([&](double d) { return matern_corr(d, params.beta_km, params.nu); });
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    Eigen::MatrixXd upper;
    if (llt.info() == Eigen::Success) {
      upper = llt.matrixU();
    } else {
      Eigen::MatrixXd jittered = corr;
      jittered.diagonal().array() += 1e-10;
      Eigen::LLT<Eigen::MatrixXd> retry(jittered);
      if (retry.info() != Eigen::Success) {
        jittered.diagonal().array() += 1e-8;
        retry.compute(jittered);
        if (retry.info() != Eigen::Success)
          throw std::runtime_error("simulator: spatial correlation not positive definite");
      }
      upper = retry.matrixU();
    }
    spatial_.resize(static_cast<size_t>(p_));
    for (int t = 0; t < p_; ++t) {
      spatial_[t].resize(s_, dist_.rows());
      detail::parallel_chunks(s_, kReplicateChunk, [&](Eigen::Index lo, Eigen::Index hi) {
        spatial_[t].middleRows(lo, hi - lo).noalias() = z_[t].middleRows(lo, hi - lo) * upper;
      });
    }
    cached_beta_ = params.beta_km;
    cached_nu_ = params.nu;
  }
  mix_fields(spatial_, params, mixed_);
}

FsaJointSimulator::FsaJointSimulator(std::vector<SpherePoint> locs,
                                     std::vector<SpherePoint> knots, Eigen::Index block_size,
                                     int p, int s, uint64_t seed)
    : plan_(std::move(locs), std::move(knots), block_size), p_(p), s_(s), seed_(seed) {
  if (p_ < 1 || s_ < 1) throw std::invalid_argument("simulator: need p >= 1 and s >= 1");
  z0_.resize(static_cast<size_t>(p_));
  z1_.resize(static_cast<size_t>(p_));
  for (int t = 0; t < p_; ++t) {
    z0_[t].resize(s_, plan_.m());
    z1_[t].resize(s_, plan_.n());
    CounterRng(seed_, stream_id(RngStream::knot_field, t)).fill_normals(z0_[t]);
    CounterRng(seed_, stream_id(RngStream::fine_field, t)).fill_normals(z1_[t]);
  }
}

void FsaJointSimulator::set_params(const MultiMaternParams& params) {
  if (params.p != p_) throw std::invalid_argument("simulator: type count mismatch");
  if (params.beta_km != cached_beta_ || params.nu != cached_nu_) {
    const FsaDecomposition fsa = plan_.decompose(
        [&](double d) { return matern_corr(d, params.beta_km, params.nu); });
    spatial_.resize(static_cast<size_t>(p_));
    for (int t = 0; t < p_; ++t) spatial_[t] = fsa_combine(fsa, z0_[t], z1_[t]);
    cached_beta_ = params.beta_km;
    cached_nu_ = params.nu;
  }
  mix_fields(spatial_, params, mixed_);
}

double mc_loglik(const Eigen::MatrixXd& mean_log_intensity,
                 const std::vector<PointPattern>& patterns, const Eigen::VectorXd& weights,
                 const MultiMaternParams& cov, JointFieldSimulator& sim) {
  const int p = sim.types();
  const Eigen::Index n = sim.n_cells();
  if (mean_log_intensity.rows() != p || mean_log_intensity.cols() != n)
    throw std::invalid_argument("mc_loglik: mean surface shape mismatch");
  if (weights.size() != n) throw std::invalid_argument("mc_loglik: weights length mismatch");
  if (!mean_log_intensity.allFinite())
    throw std::invalid_argument("mc_loglik: non-finite mean surface");
  const auto ordered = ordered_patterns(patterns, p, n);

  sim.set_params(cov);
  std::vector<const Eigen::MatrixXd*> field_ptrs;
  field_ptrs.reserve(static_cast<size_t>(p));
  for (const auto& f : sim.fields()) field_ptrs.push_back(&f);

  const auto l = replicate_logliks(mean_log_intensity, field_ptrs, sim.replicates(), ordered,
                                   weights);
  return logsumexp_mean(l);
}

std::vector<PointPattern> simulate_pattern(const IntensitySurface& surface, uint64_t seed,
                                           bool occurrence_only) {
  const int p = surface.p();
  const Eigen::Index n = surface.n_cells();
  if (surface.weights.size() != n)
    throw std::invalid_argument("simulate_pattern: weights/surface size mismatch");

  std::vector<PointPattern> patterns(static_cast<size_t>(p));
  for (int t = 0; t < p; ++t) {
    patterns[t].type_id = t + 1;
    CounterRng rng(seed, stream_id(RngStream::pattern, t));
    for (Eigen::Index k = 0; k < n; ++k) {
      const double y = surface.log_lambda(t, k);
      const double mu = std::exp(y) * surface.weights(k);
      if (mu > kIntensityCap)
        throw std::runtime_error("simulate_pattern: mean intensity " + std::to_string(mu) +
                                 " at cell " + std::to_string(k) + " exceeds cap");
      if (mu == 0.0) continue;
      const long count = poisson_sample(mu, rng, static_cast<uint32_t>(k));
      if (count <= 0) continue;
      const long emit = occurrence_only ? 1 : count;
      for (long c = 0; c < emit; ++c) patterns[t].events.push_back(k);
    }
  }
  return patterns;
}

}  // namespace lgcps
