#include "lgcps/fsa.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lgcps/parallel.hpp"
#include "lgcps/rng.hpp"

namespace lgcps {

namespace {

constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6};
constexpr Eigen::Index kCombineChunk = 128;

Eigen::MatrixXd apply_covfn(const Eigen::MatrixXd& dist, const RadialCovFn& covfn) {
  return dist.unaryExpr([&](double d) { return covfn(d); });
}

/// Cholesky with the escalating jitter ladder; returns the upper factor
/// and records the jitter actually added (as a fraction of mean diag).
bool jittered_cholesky(const Eigen::MatrixXd& mat, Eigen::MatrixXd& upper, double& jitter_used) {
  const double mean_diag = mat.diagonal().mean();
  for (double mult : kJitterLadder) {
    Eigen::MatrixXd attempt = mat;
    if (mult > 0.0) attempt.diagonal().array() += mult * mean_diag;
    Eigen::LLT<Eigen::MatrixXd> llt(attempt);
    if (llt.info() == Eigen::Success) {
      upper = llt.matrixU();
      jitter_used = mult;
      return true;
    }
  }
  return false;
}

std::pair<Eigen::Index, Eigen::Index> closest_pair(const std::vector<SpherePoint>& pts,
                                                   double& dist) {
  std::pair<Eigen::Index, Eigen::Index> best{0, 0};
  dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(pts.size()); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = great_circle_distance(pts[i], pts[j]);
      if (d < dist) {
        dist = d;
        best = {j, i};
      }
    }
  return best;
}

}  // namespace

std::vector<Eigen::Index> spatial_sort_order(const std::vector<SpherePoint>& locs,
                                             Eigen::Index block_size) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  double lat_min = 90.0, lat_max = -90.0;
  for (const auto& p : locs) {
    lat_min = std::min(lat_min, p.lat);
    lat_max = std::max(lat_max, p.lat);
  }
  const double extent = std::max(lat_max - lat_min, 1e-12);
  const Eigen::Index n_bands = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(
             std::ceil(std::sqrt(static_cast<double>(n) / static_cast<double>(block_size)))));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto band_of = [&](Eigen::Index k) {
    const double t = (locs[k].lat - lat_min) / extent;
    return std::min<Eigen::Index>(n_bands - 1,
                                  static_cast<Eigen::Index>(t * static_cast<double>(n_bands)));
  };
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const Eigen::Index ba = band_of(a), bb = band_of(b);
    if (ba != bb) return ba < bb;
    if (locs[a].lon != locs[b].lon) return locs[a].lon < locs[b].lon;
    if (locs[a].lat != locs[b].lat) return locs[a].lat < locs[b].lat;
    return a < b;
  });
  return order;
}

FsaPlan::FsaPlan(std::vector<SpherePoint> locs, std::vector<SpherePoint> knots,
                 Eigen::Index block_size) {
  n_ = static_cast<Eigen::Index>(locs.size());
  m_ = static_cast<Eigen::Index>(knots.size());
  if (n_ < 1) throw std::invalid_argument("FsaPlan: no locations");
  if (m_ < 1 || m_ > n_) throw std::invalid_argument("FsaPlan: need 1 <= m <= N");
  if (block_size < 1) throw std::invalid_argument("FsaPlan: block_size must be >= 1");

  double min_knot_dist = 0.0;
  if (m_ > 1) {
    const auto pair = closest_pair(knots, min_knot_dist);
    if (min_knot_dist <= 0.0)
      throw std::invalid_argument("FsaPlan: duplicate knots at indices " +
                                  std::to_string(pair.first) + " and " +
                                  std::to_string(pair.second));
  }

  perm_ = spatial_sort_order(locs, block_size);
  locs_.reserve(n_);
  for (Eigen::Index pos = 0; pos < n_; ++pos) locs_.push_back(locs[perm_[pos]]);
  knots_ = std::move(knots);

  for (Eigen::Index start = 0; start < n_; start += block_size) {
    block_start_.push_back(start);
    block_sizes_.push_back(std::min(block_size, n_ - start));
  }

  dist_a_.resize(n_, m_);
  for (Eigen::Index k = 0; k < n_; ++k)
    for (Eigen::Index u = 0; u < m_; ++u)
      dist_a_(k, u) = great_circle_distance(locs_[k], knots_[u]);

  dist_r_.resize(m_, m_);
  for (Eigen::Index u = 0; u < m_; ++u) {
    dist_r_(u, u) = 0.0;
    for (Eigen::Index v = 0; v < u; ++v) {
      const double d = great_circle_distance(knots_[u], knots_[v]);
      dist_r_(u, v) = d;
      dist_r_(v, u) = d;
    }
  }

  dist_blk_.reserve(block_start_.size());
  for (size_t b = 0; b < block_start_.size(); ++b) {
    const Eigen::Index lo = block_start_[b], nb = block_sizes_[b];
    Eigen::MatrixXd d(nb, nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
      d(i, i) = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double dij = great_circle_distance(locs_[lo + i], locs_[lo + j]);
        d(i, j) = dij;
        d(j, i) = dij;
      }
    }
    dist_blk_.push_back(std::move(d));
  }
}

FsaDecomposition FsaPlan::decompose(const RadialCovFn& covfn) const {
  FsaDecomposition fsa;
  fsa.knots = knots_;
  fsa.perm = perm_;
  fsa.block_start = block_start_;
  fsa.block_size = block_sizes_;
  fsa.n = n_;
  fsa.m = m_;

  fsa.A = apply_covfn(dist_a_, covfn);
  const Eigen::MatrixXd R = apply_covfn(dist_r_, covfn);
  if (!jittered_cholesky(R, fsa.R_chol, fsa.jitter_used)) {
    double dist = 0.0;
    const auto pair = m_ > 1 ? closest_pair(knots_, dist)
                             : std::pair<Eigen::Index, Eigen::Index>{0, 0};
    throw std::runtime_error(
        "build_fsa: knot covariance R is numerically singular after max jitter; "
        "closest knot pair (" +
        std::to_string(pair.first) + ", " + std::to_string(pair.second) + ") separated by " +
        std::to_string(dist) + " km");
  }

  // Forward solve U_R^T B = A^T.
  fsa.B = fsa.R_chol.transpose().triangularView<Eigen::Lower>().solve(fsa.A.transpose());

  fsa.block_factors.reserve(block_start_.size());
  for (size_t b = 0; b < block_start_.size(); ++b) {
    const Eigen::Index lo = block_start_[b], nb = block_sizes_[b];
    const Eigen::MatrixXd sigma_bb = apply_covfn(dist_blk_[b], covfn);
    const Eigen::MatrixXd pp_bb = fsa.B.middleCols(lo, nb).transpose() * fsa.B.middleCols(lo, nb);
    Eigen::MatrixXd v_b = sigma_bb - pp_bb;
    v_b = 0.5 * (v_b + v_b.transpose());

    const double scale = std::max(1.0, sigma_bb.diagonal().maxCoeff());
    if (v_b.cwiseAbs().maxCoeff() <= 1e-14 * scale) {
      fsa.block_factors.emplace_back(Eigen::MatrixXd::Zero(nb, nb));
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(v_b);
    if (llt.info() == Eigen::Success) {
      fsa.block_factors.emplace_back(llt.matrixU());
      continue;
    }
    // Semidefinite block: floor small negative eigenvalues at zero.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v_b);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -1e-8 * scale)
      throw std::runtime_error("build_fsa: remainder block " + std::to_string(b) +
                               " has eigenvalue " + std::to_string(min_eig) +
                               " below the PSD floor");
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    fsa.block_factors.emplace_back(root.asDiagonal() * es.eigenvectors().transpose());
  }
  return fsa;
}

FsaDecomposition build_fsa(const std::vector<SpherePoint>& locs,
                           const std::vector<SpherePoint>& knots, Eigen::Index block_size,
                           const RadialCovFn& covfn) {
  return FsaPlan(locs, knots, block_size).decompose(covfn);
}

Eigen::MatrixXd implied_cov(const FsaDecomposition& fsa, Eigen::Index max_n) {
  if (fsa.n > max_n)
    throw std::runtime_error("implied_cov: N = " + std::to_string(fsa.n) +
                             " exceeds the materialization cap " + std::to_string(max_n));
  Eigen::MatrixXd w = fsa.B.transpose() * fsa.B;
  for (size_t b = 0; b < fsa.block_factors.size(); ++b) {
    const Eigen::Index lo = fsa.block_start[b], nb = fsa.block_size[b];
    w.block(lo, lo, nb, nb) += fsa.block_factors[b].transpose() * fsa.block_factors[b];
  }
  // Back to caller order.
  Eigen::MatrixXd out(fsa.n, fsa.n);
  for (Eigen::Index i = 0; i < fsa.n; ++i)
    for (Eigen::Index j = 0; j < fsa.n; ++j) out(fsa.perm[i], fsa.perm[j]) = w(i, j);
  return out;
}

Eigen::MatrixXd fsa_combine(const FsaDecomposition& fsa, const Eigen::MatrixXd& s0,
                            const Eigen::MatrixXd& s1) {
  const Eigen::Index s = s0.rows();
  if (s0.cols() != fsa.m || s1.rows() != s || s1.cols() != fsa.n)
    throw std::invalid_argument("fsa_combine: normal matrices have wrong shape");

  Eigen::MatrixXd internal(s, fsa.n);
  detail::parallel_chunks(s, kCombineChunk, [&](Eigen::Index lo, Eigen::Index hi) {
    internal.middleRows(lo, hi - lo).noalias() = s0.middleRows(lo, hi - lo) * fsa.B;
    for (size_t b = 0; b < fsa.block_factors.size(); ++b) {
      const Eigen::Index blo = fsa.block_start[b], nb = fsa.block_size[b];
      Eigen::MatrixXd s1_blk(hi - lo, nb);
      for (Eigen::Index c = 0; c < nb; ++c)
        s1_blk.col(c) = s1.col(fsa.perm[blo + c]).segment(lo, hi - lo);
      internal.block(lo, blo, hi - lo, nb).noalias() += s1_blk * fsa.block_factors[b];
    }
  });

  Eigen::MatrixXd out(s, fsa.n);
  for (Eigen::Index pos = 0; pos < fsa.n; ++pos) out.col(fsa.perm[pos]) = internal.col(pos);
  return out;
}

Eigen::MatrixXd simulate_fields(const FsaDecomposition& fsa, int s, uint64_t seed,
                                int type_index) {
  Eigen::MatrixXd s0(s, fsa.m), s1(s, fsa.n);
  CounterRng(seed, stream_id(RngStream::knot_field, type_index)).fill_normals(s0);
  CounterRng(seed, stream_id(RngStream::fine_field, type_index)).fill_normals(s1);
  return fsa_combine(fsa, s0, s1);
}

Eigen::MatrixXd dense_cov_cholesky(const std::vector<SpherePoint>& locs,
                                   const RadialCovFn& covfn) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sigma(i, i) = covfn(0.0);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = covfn(great_circle_distance(locs[i], locs[j]));
      sigma(i, j) = c;
      sigma(j, i) = c;
    }
  }
  Eigen::MatrixXd upper;
  double jitter = 0.0;
  if (!jittered_cholesky(sigma, upper, jitter))
    throw std::runtime_error("dense_cov_cholesky: covariance not positive definite "
                             "after max jitter (N = " + std::to_string(n) + ")");
  return upper;
}

Eigen::MatrixXd exact_simulate(const std::vector<SpherePoint>& locs, const RadialCovFn& covfn,
                               int s, uint64_t seed, int type_index) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  const Eigen::MatrixXd upper = dense_cov_cholesky(locs, covfn);
  Eigen::MatrixXd z(s, n);
  CounterRng(seed, stream_id(RngStream::fine_field, type_index)).fill_normals(z);
  Eigen::MatrixXd out(s, n);
  detail::parallel_chunks(s, kCombineChunk, [&](Eigen::Index lo, Eigen::Index hi) {
    out.middleRows(lo, hi - lo).noalias() = z.middleRows(lo, hi - lo) * upper;
  });
  return out;
}

}  // namespace lgcps
