#pragma once

#include <Eigen/Core>
#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lgcps::detail {

/// Run fn(lo, hi) over fixed-size chunks of [0, count). Chunk boundaries
/// do not depend on the thread count, and each chunk is processed
/// sequentially, so results are bit-identical whether or not OpenMP is
/// enabled and for any number of threads.
template <class Fn>
void parallel_chunks(Eigen::Index count, Eigen::Index chunk, Fn&& fn) {
  if (count <= 0) return;
  chunk = std::max<Eigen::Index>(1, chunk);
  const Eigen::Index nchunks = (count + chunk - 1) / chunk;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index c = 0; c < nchunks; ++c) {
    const Eigen::Index lo = c * chunk;
    const Eigen::Index hi = std::min(lo + chunk, count);
    fn(lo, hi);
  }
}

}  // namespace lgcps::detail
