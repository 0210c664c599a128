#pragma once

#include <cstdint>
#include <cmath>

#include "conforest/common.hpp"

namespace conforest {

// Counter-based generator. Draw i of stream (seed, tag) is
//   mix64(stream_key + i * 0x9E3779B97F4A7C15)   with stream_key = mix64(seed ^ tag),
// where mix64 is the SplitMix64 finalizer. Every draw is random-access, so
// sub-streams can be consumed in parallel without coordination and results
// do not depend on thread count.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Named sub-streams fanned out from the single run seed. Adding a stage
// never perturbs the draws of another stage.
enum class Stream : std::uint64_t {
  kData = 0x01,
  kBaseModel = 0x02,
  kLocalizer = 0x03,
  kClustering = 0x04,
  kMcOracle = 0x05,
  kSplit = 0x06,
  kTest = 0x07,
};

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t tag)
      : key_(mix64(seed ^ (tag * 0xD1342543DE82EF95ULL))) {}
  CounterRng(std::uint64_t seed, Stream s)
      : CounterRng(seed, static_cast<std::uint64_t>(s)) {}

  // Child stream: an independent key derived from this stream and an index
  // (e.g. one stream per tree).
  CounterRng child(std::uint64_t index) const {
    return CounterRng(key_, 0x8CB92BA72F3D8DD7ULL + index);
  }

  std::uint64_t next_u64() { return at(counter_++); }

  // Random access without advancing the sequential counter.
  std::uint64_t at(std::uint64_t i) const {
    return mix64(key_ + i * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform on [0, 1).
  double next_double() { return to_unit(next_u64()); }

  // Uniform on (0, 1), strictly interior; feed for the normal transform.
  double next_open_double() { return to_open_unit(next_u64()); }

  // Uniform integer in [0, bound) by widening multiply; bound <= 2^32 keeps
  // the modulo bias below 2^-32, which is immaterial here and keeps draws
  // one-word cheap.
  std::uint64_t next_below(std::uint64_t bound) {
    return (static_cast<unsigned __int128>(next_u64()) * bound) >> 64;
  }

  double next_normal() { return inverse_normal_cdf(next_open_double()); }

  static double to_unit(std::uint64_t r) {
    return static_cast<double>(r >> 11) * 0x1.0p-53;
  }
  static double to_open_unit(std::uint64_t r) {
    return static_cast<double>(r >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  // Inverse standard normal c.d.f., Wichura's AS 241 (PPND16) rational
  // approximation; |error| < 1e-15 over (0,1). Rational in the central
  // region, log/sqrt in the tails, so deviates are reproducible anywhere
  // IEEE doubles and a faithful libm are available.
  static double inverse_normal_cdf(double p);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Seeded Fisher-Yates shuffle of indices [0, n); used for data splits and
// Louvain visit order.
void shuffle_indices(std::vector<std::uint32_t>& idx, CounterRng& rng);

}  // namespace conforest
