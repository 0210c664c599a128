#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace conforest {

// Correctly rounded floating-point accumulation (Shewchuk partials with the
// CPython fsum finalization). The calibration algebra compares cumulative
// weight masses for exact equality across different evaluation orders, so
// every cumulative mass in the code base is produced by this accumulator:
// the result is a function of the summand multiset only, not of the order
// in which the summands arrive.
class ExactSum {
 public:
  ExactSum() = default;

  void add(double x) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      double y = parts_[i];
      if (std::fabs(x) < std::fabs(y)) {
        double t = x;
        x = y;
        y = t;
      }
      double hi = x + y;
      double lo = y - (hi - x);
      if (lo != 0.0) parts_[out++] = lo;
      x = hi;
    }
    parts_.resize(out);
    parts_.push_back(x);
  }

  // Correctly rounded value of the exact running sum.
  double round() const {
    std::size_t n = parts_.size();
    if (n == 0) return 0.0;
    double hi = parts_[n - 1];
    double lo = 0.0;
    while (n > 1) {
      double x = hi;
      double y = parts_[n - 2];
      hi = x + y;
      double yr = hi - x;
      lo = y - yr;
      --n;
      if (lo != 0.0) break;
    }
    // Half-ulp tie: round to the side the remaining partials point to.
    if (n > 1 && ((lo < 0.0 && parts_[n - 2] < 0.0) ||
                  (lo > 0.0 && parts_[n - 2] > 0.0))) {
      double y = lo * 2.0;
      double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

  void reset() { parts_.clear(); }

 private:
  std::vector<double> parts_;
};

// Correctly rounded sum of a range.
template <typename It>
double exact_sum(It first, It last) {
  ExactSum acc;
  for (; first != last; ++first) acc.add(*first);
  return acc.round();
}

inline double exact_sum(const std::vector<double>& v) {
  return exact_sum(v.begin(), v.end());
}

}  // namespace conforest
