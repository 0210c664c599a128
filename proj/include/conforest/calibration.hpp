#pragma once

#include <memory>
#include <span>
#include <vector>

#include "conforest/forest.hpp"

namespace conforest {

// Calibration state for the forest-localized conformal methods: residuals,
// the localizer forest fitted on (X_i, V_i), residual order statistics, and
// per-anchor summaries of the test-free localizer rows. The summaries carry
// exactly the cumulative masses the threshold searches compare, so queries
// only have to rework the anchors whose leaves the test point actually
// enters.
struct LcpModel {
  Forest localizer;
  std::vector<double> residuals;  // calibration order
  double alpha = 0.1;

  // canonical residual order: ranks sorted by (residual, index)
  std::vector<std::uint32_t> order;      // rank -> calibration index
  std::vector<std::uint32_t> rank_of;    // calibration index -> rank
  std::vector<double> sorted_residuals;  // V_(1..n)

  // test-free row summaries per anchor
  std::vector<double> base_below;   // calibration mass strictly below V_i
  std::vector<double> base_supmax;  // largest residual with positive weight
  // all ladder cumulatives of every test-free row, sorted, with row ids
  std::vector<std::pair<double, std::uint32_t>> base_levels;

  std::size_t n() const { return residuals.size(); }
};

LcpModel lcp_fit(const Dataset& calib, const ForestParams& localizer_params,
                 double alpha);

// Per-test-point working state shared by the threshold searches: leaves of
// x, the set of anchors sharing a leaf with x (the only rows whose weights
// differ from the test-free ones), patched row summaries, and the test row
// with its c.d.f. F = F_{n+1}^inf.
class TestPointContext {
 public:
  TestPointContext(const LcpModel& model, std::span<const double> x);

  const LcpModel& model() const { return *model_; }
  const StepCdf& test_cdf() const { return test_cdf_; }
  const WeightVector& test_row() const { return test_row_; }
  const std::vector<double>& below() const { return below_; }
  const std::vector<double>& test_slot() const { return tslot_; }
  const std::vector<double>& supmax() const { return supmax_; }
  // effective quantile-jump levels of the reworked rows (rider at +inf)
  const std::vector<double>& affected_levels() const { return affected_levels_; }
  const std::vector<std::uint32_t>& affected() const { return affected_; }
  bool is_affected(std::uint32_t anchor) const { return affected_mask_[anchor]; }

 private:
  const LcpModel* model_;
  std::vector<std::uint32_t> affected_;
  std::vector<char> affected_mask_;
  std::vector<double> below_;
  std::vector<double> tslot_;
  std::vector<double> supmax_;
  std::vector<double> affected_levels_;
  WeightVector test_row_;
  StepCdf test_cdf_;
};

// Split-conformal score threshold: the (1-alpha)-quantile of the empirical
// residual c.d.f. with its +inf atom; V_(ceil((1-alpha)(n+1))) or +inf.
double split_threshold(const std::vector<double>& residuals, double alpha);

// Smallest count c with c/(n_total) >= 1 - alpha under the same floating
// comparison every coverage check uses.
std::size_t min_feasible_count(std::size_t n_total, double alpha);

// The finite candidate set of achievable cumulative-weight levels at test
// point x with the test residual pinned to v: every level the localized
// quantiles can jump at, plus 0 and 1. Sorted, deduplicated.
std::vector<double> candidate_levels(const LcpModel& model, std::span<const double> x,
                                     double v);

// Smallest candidate level whose plug-in coverage
//   sum_i 1[V_i^v <= Q(level; F_i^v)] / (n+1)
// reaches 1 - alpha; 1 if no candidate does (conservative fallback). The
// coverage count is nondecreasing in the level, so the search is a binary
// search / order-statistic selection over the candidate set.
double alpha_tilde(const LcpModel& model, std::span<const double> x, double v);
double alpha_tilde(const LcpModel& model, const TestPointContext& ctx, double v);

// Matrix-backed variants over explicit weight rows (n calibration rows plus
// the test row, as produced by cross_weight_matrix): the same searches
// without a fitted forest. The literal implementations behind the
// brute-force oracle, also usable with synthetic weight matrices.
double alpha_tilde_rows(const std::vector<WeightVector>& rows,
                        const std::vector<double>& residuals, double alpha, double v);
double lcp_threshold_naive_rows(const std::vector<WeightVector>& rows,
                                const std::vector<double>& residuals, double alpha);
double lcp_threshold_rows(const std::vector<WeightVector>& rows,
                          const std::vector<double>& residuals, double alpha);

// Brute-force test inversion: for every order statistic v = V_(k) (and
// +inf), recompute alpha_tilde(x, v) from scratch and accept v when
// v <= Q(alpha_tilde; F). Returns the largest accepted value, or the empty
// sentinel when nothing is accepted. Reference oracle for lcp_threshold.
double lcp_threshold_naive(const LcpModel& model, std::span<const double> x);

// Fast path: one sweep over the residual order statistics maintaining the
// per-anchor flip levels incrementally; exactly equivalent to
// lcp_threshold_naive by construction (the compared cumulative masses are
// bit-identical) and enforced by differential tests.
double lcp_threshold(const LcpModel& model, std::span<const double> x);
double lcp_threshold(const TestPointContext& ctx);

// Training-conditional correction (PAC calibration).
struct TcModel {
  LcpModel inner;  // localizer fitted on the first calibration half
  double alpha_hat = 0.0;
  std::vector<double> grid;  // T = {0, alpha/K, ..., alpha}
  bool fixed_level = false;  // true: level 1-alpha instead of alpha_tilde(x)
  bool warn_no_feasible = false;
  double epsilon = 0.0;
  double delta = 0.0;  // |T| exp(-2 n2 eps^2)
  std::size_t n2 = 0;
};

// Fits the localizer on d1, computes per-point levels on d2 (alpha_tilde
// with the residual at +inf, or the fixed level 1-alpha), and picks the
// smallest grid correction alpha_hat whose d2 coverage reaches 1 - alpha.
// If no grid value suffices, alpha_hat = alpha and the warning flag is set.
TcModel tc_fit(const Dataset& d1, const Dataset& d2, const ForestParams& params,
               double alpha, std::size_t grid_size, bool fixed_level,
               double epsilon = 0.02);

// Q(min(1, level + alpha_hat); F_x) with level = alpha_tilde(x, +inf) or
// 1-alpha in fixed mode.
double tc_threshold(const TcModel& tc, std::span<const double> x);

enum class Method { kSplit, kLcpRf, kQrfTc, kLcpRfTc };

struct CalibrationState {
  Method method = Method::kSplit;
  double alpha = 0.1;
  std::vector<double> residuals;       // split
  std::shared_ptr<LcpModel> lcp;       // lcp-rf
  std::shared_ptr<TcModel> tc;         // qrf-tc / lcp-rf-tc
};

double predict_threshold(const CalibrationState& state, std::span<const double> x);

namespace detail {

// Shared acceptance sweep over residual order statistics. scan_order lists
// the anchors taking part in the coverage sum, ascending by (residual,
// index); the denominator is scan_order.size() + 1. The full-calibration
// threshold passes model.order; the groupwise threshold passes the region
// members. below/tslot/supmax are indexed by anchor id.
double lcp_sweep(std::span<const double> below, std::span<const double> tslot,
                 std::span<const double> supmax, const std::vector<double>& residuals,
                 const std::vector<std::uint32_t>& scan_order, double alpha,
                 const StepCdf& test_cdf);

}  // namespace detail

}  // namespace conforest
