#pragma once

#include <memory>
#include <span>
#include <vector>

#include "conforest/forest.hpp"

namespace conforest {

enum class ScoreKind { kMeanAbsolute, kQuantilePair };

struct Interval {
  double lower = -kInf;
  double upper = kInf;
  double center = 0.0;  // mu_hat(x) or the quantile-pair midpoint
  double radius = 0.0;  // the accepted score threshold
  bool empty = false;

  bool covers(double y) const { return !empty && lower <= y && y <= upper; }
  double length() const { return empty ? 0.0 : upper - lower; }

  static Interval empty_at(double center);
};

// Base model behind the nonconformity score: a mean forest, a pair of
// quantile forests (one forest queried at two levels), or externally
// supplied per-row quantile predictions.
class BasePredictor {
 public:
  static BasePredictor mean_forest(std::shared_ptr<const Forest> f);
  static BasePredictor quantile_forest(std::shared_ptr<const Forest> f, double beta_lo,
                                       double beta_hi);
  // Predictions aligned with the original table rows; queries carry row ids.
  static BasePredictor external_pair(std::vector<double> lo, std::vector<double> hi);

  ScoreKind kind() const { return kind_; }
  bool is_external() const { return external_; }
  double beta_lo() const { return beta_lo_; }
  double beta_hi() const { return beta_hi_; }
  const Forest* forest() const { return forest_.get(); }
  const std::vector<double>& external_lo() const { return lo_; }
  const std::vector<double>& external_hi() const { return hi_; }

  double mean_at(std::span<const double> x) const;
  // lower/upper quantile predictions; row_id indexes external columns.
  std::pair<double, double> pair_at(std::span<const double> x, std::int64_t row_id) const;

 private:
  BasePredictor() = default;
  ScoreKind kind_ = ScoreKind::kMeanAbsolute;
  bool external_ = false;
  double beta_lo_ = 0.0, beta_hi_ = 0.0;
  std::shared_ptr<const Forest> forest_;
  std::vector<double> lo_, hi_;
};

// Nonconformity score of (x, y): |y - mu(x)| for the mean score,
// max(q_lo(x) - y, y - q_hi(x)) for the quantile pair (may be negative).
double score(const BasePredictor& p, std::span<const double> x, std::int64_t row_id,
             double y);

// Set of y with score <= threshold. threshold = +inf gives the whole line;
// a mean-score threshold < 0 (or the empty sentinel) gives the empty set.
Interval invert(const BasePredictor& p, std::span<const double> x, std::int64_t row_id,
                double threshold);

}  // namespace conforest
