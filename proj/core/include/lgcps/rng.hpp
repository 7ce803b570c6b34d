#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>

namespace lgcps {

/// Philox 4x32-10 block cipher: 128-bit counter, 64-bit key, 128-bit output.
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> counter, uint64_t key);

/// Stream identifiers. Every consumer of randomness owns a distinct
/// stream so draws never collide across uses of one seed.
enum class RngStream : uint32_t {
  knot_field = 0,   // S0 normals, one sub-stream per process type
  fine_field = 16,  // S1 normals, one sub-stream per process type
  pattern = 32,     // Poisson event counts, one sub-stream per type
  generic = 48,     // scratch draws (tests, synthetic fixtures)
};

inline uint32_t stream_id(RngStream s, int sub = 0) {
  return static_cast<uint32_t>(s) + static_cast<uint32_t>(sub);
}

/// Counter-based random source keyed by (seed, stream). Each variate is a
/// pure function of (replicate, element), so any slice of the lattice can
/// be regenerated independently and in any order. This is what makes the
/// same underlying draws reusable across covariance parameter values.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint32_t stream) : seed_(seed), stream_(stream) {}

  /// Standard normal variate at lattice position (replicate, element).
  double normal(uint32_t replicate, uint64_t element) const;

  /// Uniform variate in (0, 1) at lattice position (replicate, element).
  double uniform(uint32_t replicate, uint64_t element) const;

  /// Fill an s x n matrix with normals; row j holds replicate first+j.
  void fill_normals(Eigen::Ref<Eigen::MatrixXd> out, uint32_t first_replicate = 0) const;

  uint64_t seed() const { return seed_; }
  uint32_t stream() const { return stream_; }

 private:
  uint64_t seed_;
  uint32_t stream_;
};

/// Poisson draw with the given mean, consuming uniforms from the
/// (replicate=slot) row of `rng`. Inversion for small means, Hormann's
/// PTRS rejection for large ones. Deterministic in (rng, slot).
long poisson_sample(double mean, const CounterRng& rng, uint32_t slot);

}  // namespace lgcps
