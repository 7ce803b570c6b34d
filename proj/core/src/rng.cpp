#include "lgcps/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace lgcps {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& c, uint32_t k0, uint32_t k1) {
  const uint64_t p0 = static_cast<uint64_t>(kPhiloxM0) * c[0];
  const uint64_t p1 = static_cast<uint64_t>(kPhiloxM1) * c[2];
  const std::array<uint32_t, 4> out = {
      static_cast<uint32_t>(p1 >> 32) ^ c[1] ^ k0,
      static_cast<uint32_t>(p1),
      static_cast<uint32_t>(p0 >> 32) ^ c[3] ^ k1,
      static_cast<uint32_t>(p0),
  };
  c = out;
}

constexpr double kTwoPow64Inv = 5.421010862427522e-20;  // 2^-64
constexpr double kTwoPi = 6.283185307179586476925287;

inline uint64_t word_pair(const std::array<uint32_t, 4>& w, int which) {
  return which == 0 ? (static_cast<uint64_t>(w[0]) << 32) | w[1]
                    : (static_cast<uint64_t>(w[2]) << 32) | w[3];
}

}  // namespace

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> counter, uint64_t key) {
  uint32_t k0 = static_cast<uint32_t>(key);
  uint32_t k1 = static_cast<uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    philox_round(counter, k0, k1);
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return counter;
}

double CounterRng::normal(uint32_t replicate, uint64_t element) const {
  // One block yields a Box-Muller pair; consecutive elements share a block.
  const uint64_t pair = element >> 1;
  const auto w = philox4x32({static_cast<uint32_t>(pair), static_cast<uint32_t>(pair >> 32),
                             replicate, stream_},
                            seed_);
  const double u1 = (static_cast<double>(word_pair(w, 0)) + 1.0) * kTwoPow64Inv;  // (0, 1]
  const double u2 = (static_cast<double>(word_pair(w, 1)) + 0.5) * kTwoPow64Inv;  // (0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  return (element & 1) ? r * std::sin(kTwoPi * u2) : r * std::cos(kTwoPi * u2);
}

double CounterRng::uniform(uint32_t replicate, uint64_t element) const {
  const uint64_t block = element >> 1;
  const auto w = philox4x32({static_cast<uint32_t>(block), static_cast<uint32_t>(block >> 32),
                             replicate, stream_ ^ 0x40000000u},
                            seed_);
  const uint64_t v = word_pair(w, static_cast<int>(element & 1));
  return (static_cast<double>(v) + 0.5) * kTwoPow64Inv;
}

void CounterRng::fill_normals(Eigen::Ref<Eigen::MatrixXd> out, uint32_t first_replicate) const {
  const Eigen::Index s = out.rows();
  const Eigen::Index n = out.cols();
  for (Eigen::Index j = 0; j < s; ++j) {
    const uint32_t rep = first_replicate + static_cast<uint32_t>(j);
    for (Eigen::Index e = 0; e + 1 < n; e += 2) {
      const uint64_t pair = static_cast<uint64_t>(e) >> 1;
      const auto w = philox4x32({static_cast<uint32_t>(pair), static_cast<uint32_t>(pair >> 32),
                                 rep, stream_},
                                seed_);
      const double u1 = (static_cast<double>(word_pair(w, 0)) + 1.0) * kTwoPow64Inv;
      const double u2 = (static_cast<double>(word_pair(w, 1)) + 0.5) * kTwoPow64Inv;
      const double r = std::sqrt(-2.0 * std::log(u1));
      out(j, e) = r * std::cos(kTwoPi * u2);
      out(j, e + 1) = r * std::sin(kTwoPi * u2);
    }
    if (n & 1) out(j, n - 1) = normal(rep, static_cast<uint64_t>(n - 1));
  }
}

namespace {

// Sequential inversion; exact and cheap for small means.
long poisson_inversion(double mean, const CounterRng& rng, uint32_t slot, uint64_t& next) {
  const double u = rng.uniform(slot, next++);
  double p = std::exp(-mean);
  double cdf = p;
  long k = 0;
  while (u > cdf) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
    if (k > 10000000L) break;  // cdf saturated by rounding
  }
  return k;
}

// Hormann (1993) transformed rejection with squeeze, PTRS.
long poisson_ptrs(double mean, const CounterRng& rng, uint32_t slot, uint64_t& next) {
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);

  for (;;) {
    const double u = rng.uniform(slot, next++) - 0.5;
    const double v = rng.uniform(slot, next++);
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_mean - mean - std::lgamma(k + 1.0))
      return static_cast<long>(k);
  }
}

}  // namespace

long poisson_sample(double mean, const CounterRng& rng, uint32_t slot) {
  if (!(mean >= 0.0) || !std::isfinite(mean))
    throw std::invalid_argument("poisson_sample: mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  uint64_t next = 0;
  if (mean < 30.0) return poisson_inversion(mean, rng, slot, next);
  return poisson_ptrs(mean, rng, slot, next);
}

}  // namespace lgcps
