#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>
#include <functional>

namespace conforest {

// Error taxonomy. The CLI maps these onto exit codes (config=2, data=3,
// numeric=4); library code throws and never exits.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& msg) : Error(msg) {}
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Sentinel for an empty score-acceptance set: no finite (or infinite)
// threshold was accepted, the inverted interval is empty.
inline constexpr double kEmptyThreshold = -std::numeric_limits<double>::infinity();

inline bool is_finite(double x) { return std::isfinite(x); }

// Runs fn(i) for i in [0, n) across a small thread team. Results must be
// written to preallocated index-addressed slots so the outcome is identical
// for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Team size used by parallel_for: hardware_concurrency, overridable with
// CONFOREST_THREADS.
unsigned thread_count();

}  // namespace conforest
