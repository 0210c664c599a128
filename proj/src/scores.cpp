#include "conforest/scores.hpp"

#include <algorithm>
#include <cmath>

namespace conforest {

Interval Interval::empty_at(double center) {
  Interval iv;
  iv.lower = center;
  iv.upper = center;
  iv.center = center;
  iv.radius = 0.0;
  iv.empty = true;
  return iv;
}

BasePredictor BasePredictor::mean_forest(std::shared_ptr<const Forest> f) {
  if (!f || f->n_trees() == 0) throw StateError("mean predictor needs a fitted forest");
  BasePredictor p;
  p.kind_ = ScoreKind::kMeanAbsolute;
  p.forest_ = std::move(f);
  return p;
}

BasePredictor BasePredictor::quantile_forest(std::shared_ptr<const Forest> f,
                                             double beta_lo, double beta_hi) {
  if (!f || f->n_trees() == 0)
    throw StateError("quantile predictor needs a fitted forest");
  if (!(beta_lo > 0.0 && beta_lo < beta_hi && beta_hi < 1.0))
    throw ConfigError("quantile pair needs 0 < beta_lo < beta_hi < 1");
  BasePredictor p;
  p.kind_ = ScoreKind::kQuantilePair;
  p.forest_ = std::move(f);
  p.beta_lo_ = beta_lo;
  p.beta_hi_ = beta_hi;
  return p;
}

BasePredictor BasePredictor::external_pair(std::vector<double> lo, std::vector<double> hi) {
  if (lo.size() != hi.size() || lo.empty())
    throw DataError("external prediction columns must be nonempty and aligned");
  BasePredictor p;
  p.kind_ = ScoreKind::kQuantilePair;
  p.external_ = true;
  p.lo_ = std::move(lo);
  p.hi_ = std::move(hi);
  return p;
}

double BasePredictor::mean_at(std::span<const double> x) const {
  if (kind_ != ScoreKind::kMeanAbsolute) throw StateError("not a mean predictor");
  return forest_->predict_mean(x);
}

std::pair<double, double> BasePredictor::pair_at(std::span<const double> x,
                                                 std::int64_t row_id) const {
  if (kind_ != ScoreKind::kQuantilePair) throw StateError("not a quantile predictor");
  if (external_) {
    if (row_id < 0 || static_cast<std::size_t>(row_id) >= lo_.size())
      throw DataError("external predictions: row id out of range");
    return {lo_[static_cast<std::size_t>(row_id)], hi_[static_cast<std::size_t>(row_id)]};
  }
  return {forest_->predict_quantile(x, beta_lo_), forest_->predict_quantile(x, beta_hi_)};
}

double score(const BasePredictor& p, std::span<const double> x, std::int64_t row_id,
             double y) {
  if (p.kind() == ScoreKind::kMeanAbsolute) return std::fabs(y - p.mean_at(x));
  auto [lo, hi] = p.pair_at(x, row_id);
  return std::max(lo - y, y - hi);
}

Interval invert(const BasePredictor& p, std::span<const double> x, std::int64_t row_id,
                double threshold) {
  if (p.kind() == ScoreKind::kMeanAbsolute) {
    const double mu = p.mean_at(x);
    if (threshold < 0.0) return Interval::empty_at(mu);
    return Interval{mu - threshold, mu + threshold, mu, threshold, false};
  }
  auto [lo, hi] = p.pair_at(x, row_id);
  const double center = lo + (hi - lo) / 2.0;
  if (threshold == -kInf) return Interval::empty_at(center);
  const double lower = lo - threshold;
  const double upper = hi + threshold;
  if (lower > upper) return Interval::empty_at(center);
  return Interval{lower, upper, center, threshold, false};
}

}  // namespace conforest
