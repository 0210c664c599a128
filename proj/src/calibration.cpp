#include "conforest/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "conforest/exact_sum.hpp"
#include "conforest/kernels.hpp"

namespace conforest {

namespace {

// Canonical ladder walk over one localizer row: group the touched anchors
// by equal residual (ranks ascending), round each group mass exactly, feed
// the rounded group into the exact cumulative. Produces the same cumulative
// values, bit for bit, as StepCdf::from_atoms over the same atoms.
struct RowSummary {
  double below = 0.0;  // cumulative strictly below the anchor residual
  double supmax = -kInf;
  double total = 0.0;
};

template <typename LevelSink>
RowSummary walk_row(const std::vector<double>& w,
                    const std::vector<std::uint32_t>& touched_by_rank,
                    const std::vector<double>& residuals, double anchor_residual,
                    LevelSink&& sink) {
  RowSummary out;
  ExactSum cum;
  bool below_set = false;
  std::size_t i = 0;
  const std::size_t m = touched_by_rank.size();
  while (i < m) {
    const double loc = residuals[touched_by_rank[i]];
    ExactSum group;
    std::size_t j = i;
    while (j < m && residuals[touched_by_rank[j]] == loc) {
      group.add(w[touched_by_rank[j]]);
      ++j;
    }
    const double mass = group.round();
    if (mass > 0.0) {
      if (!below_set && loc >= anchor_residual) {
        out.below = cum.round();
        below_set = true;
      }
      cum.add(mass);
      sink(cum.round());
      out.supmax = loc;
    }
    i = j;
  }
  out.total = cum.round();
  if (!below_set) out.below = out.total;
  return out;
}

}  // namespace

LcpModel lcp_fit(const Dataset& calib, const ForestParams& localizer_params,
                 double alpha) {
  MiscoverageLevel{alpha};
  LcpModel model;
  model.localizer = Forest::fit(calib, localizer_params);
  model.residuals = calib.targets();
  model.alpha = alpha;

  const std::size_t n = model.residuals.size();
  model.order.resize(n);
  std::iota(model.order.begin(), model.order.end(), 0u);
  std::stable_sort(model.order.begin(), model.order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return model.residuals[a] < model.residuals[b];
                   });
  model.rank_of.resize(n);
  model.sorted_residuals.resize(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    model.rank_of[model.order[r]] = r;
    model.sorted_residuals[r] = model.residuals[model.order[r]];
  }

  model.base_below.resize(n);
  model.base_supmax.resize(n);

  const std::size_t blocks = std::min<std::size_t>(4 * thread_count(), n);
  std::vector<std::vector<std::pair<double, std::uint32_t>>> level_blocks(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = n * b / blocks;
    const std::size_t hi = n * (b + 1) / blocks;
    std::vector<double> w(n + 1, 0.0);
    std::vector<std::uint32_t> touched;
    auto& levels = level_blocks[b];
    for (std::size_t i = lo; i < hi; ++i) {
      touched.clear();
      model.localizer.accumulate_anchor_row(i, nullptr, w, touched);
      std::sort(touched.begin(), touched.end(), [&](std::uint32_t a, std::uint32_t c) {
        return model.rank_of[a] < model.rank_of[c];
      });
      RowSummary s = walk_row(w, touched, model.residuals, model.residuals[i],
                              [&](double cum) {
                                levels.emplace_back(cum, static_cast<std::uint32_t>(i));
                              });
      model.base_below[i] = s.below;
      model.base_supmax[i] = s.supmax;
      for (std::uint32_t t : touched) w[t] = 0.0;
      w[n] = 0.0;
    }
  });
  std::size_t total = 0;
  for (const auto& blk : level_blocks) total += blk.size();
  model.base_levels.reserve(total);
  for (auto& blk : level_blocks) {
    model.base_levels.insert(model.base_levels.end(), blk.begin(), blk.end());
    blk.clear();
    blk.shrink_to_fit();
  }
  std::sort(model.base_levels.begin(), model.base_levels.end());
  return model;
}

TestPointContext::TestPointContext(const LcpModel& model, std::span<const double> x)
    : model_(&model) {
  const std::size_t n = model.n();
  const Forest& forest = model.localizer;
  std::vector<std::int32_t> test_leaves = forest.route_all(x);

  // anchors sharing a leaf with x in at least one tree: the only rows whose
  // weights change once the test point occupies its leaves
  for (std::size_t l = 0; l < forest.n_trees(); ++l) {
    const Leaf& leaf = forest.trees()[l].leaves[static_cast<std::size_t>(test_leaves[l])];
    affected_.insert(affected_.end(), leaf.routed.begin(), leaf.routed.end());
  }
  std::sort(affected_.begin(), affected_.end());
  affected_.erase(std::unique(affected_.begin(), affected_.end()), affected_.end());
  affected_mask_.assign(n, 0);
  for (std::uint32_t a : affected_) affected_mask_[a] = 1;

  below_ = model.base_below;
  supmax_ = model.base_supmax;
  tslot_.assign(n, 0.0);

  std::vector<double> w(n + 1, 0.0);
  std::vector<std::uint32_t> touched;
  for (std::uint32_t i : affected_) {
    touched.clear();
    forest.accumulate_anchor_row(i, &test_leaves, w, touched);
    std::sort(touched.begin(), touched.end(), [&](std::uint32_t a, std::uint32_t c) {
      return model.rank_of[a] < model.rank_of[c];
    });
    RowSummary s = walk_row(w, touched, model.residuals, model.residuals[i],
                            [&](double cum) { affected_levels_.push_back(cum); });
    below_[i] = s.below;
    tslot_[i] = w[n];
    supmax_[i] = s.supmax;
    if (w[n] > 0.0) affected_levels_.push_back(s.total + w[n]);
    for (std::uint32_t t : touched) w[t] = 0.0;
    w[n] = 0.0;
  }

  test_row_ = forest.localizer_row_at(x, x);
  test_cdf_ = conditional_cdf(test_row_, model.residuals, kInf);
}

double split_threshold(const std::vector<double>& residuals, double alpha) {
  MiscoverageLevel{alpha};
  return weighted_quantile(1.0 - alpha, empirical_split_cdf(residuals));
}

std::size_t min_feasible_count(std::size_t n_total, double alpha) {
  const double target = 1.0 - alpha;
  for (std::size_t c = 0; c <= n_total; ++c) {
    if (static_cast<double>(c) / static_cast<double>(n_total) >= target) return c;
  }
  return n_total;  // c = n_total always satisfies (ratio 1 >= 1 - alpha)
}

namespace {

// Flip level of anchor i: the cumulative mass of F_i^v strictly below V_i,
// which is what 1[V_i <= Q(level; F_i^v)] compares the level against.
// Encoded +inf when F_i^v has no atom at or above V_i, so the indicator can
// never fire.
inline double flip_level(double below, double tslot, double supmax, double vi,
                         bool v_below_anchor) {
  if (v_below_anchor) {
    if (!(supmax >= vi)) return kInf;
    return below + tslot;
  }
  if (!(supmax >= vi || tslot > 0.0)) return kInf;
  return below;
}

}  // namespace

namespace detail {

double lcp_sweep(std::span<const double> below, std::span<const double> tslot,
                 std::span<const double> supmax, const std::vector<double>& residuals,
                 const std::vector<std::uint32_t>& scan_order, double alpha,
                 const StepCdf& test_cdf) {
  const std::size_t n_scan = scan_order.size();
  const double target = 1.0 - alpha;
  const double denom = static_cast<double>(n_scan + 1);

  // Flip levels in residual-rank order; entries switch from the
  // test-atom-below state to the bare state as v passes their residual.
  std::vector<double> levels(n_scan);
  for (std::size_t r = 0; r < n_scan; ++r) {
    const std::uint32_t i = scan_order[r];
    levels[r] =
        flip_level(below[i], tslot[i], supmax[i], residuals[i], /*v_below_anchor=*/true);
  }

  const auto& tlocs = test_cdf.locations();
  const auto& tcums = test_cdf.cumulatives();
  const double f_max_loc = test_cdf.max_location();

  double accepted = kEmptyThreshold;
  std::size_t flip_ptr = 0;
  std::size_t theta_ptr = 0;
  for (std::size_t k = 1; k <= n_scan + 1; ++k) {
    const double v = k <= n_scan ? residuals[scan_order[k - 1]] : kInf;
    while (flip_ptr < n_scan && residuals[scan_order[flip_ptr]] <= v) {
      const std::uint32_t i = scan_order[flip_ptr];
      levels[flip_ptr] =
          flip_level(below[i], tslot[i], supmax[i], residuals[i], /*v_below_anchor=*/false);
      ++flip_ptr;
    }
    while (theta_ptr < tlocs.size() && tlocs[theta_ptr] < v) ++theta_ptr;
    const double theta = theta_ptr > 0 ? tcums[theta_ptr - 1] : 0.0;

    // Coverage of Theorem-4.2's sum at the level theta = F(v^-): the self
    // term is zero exactly at that boundary, so v is accepted iff the level
    // is infeasible, i.e. alpha_tilde(v) must exceed it.
    const std::size_t count = kernels::ops().count_lt(levels.data(), n_scan, theta);
    const bool feasible = static_cast<double>(count) / denom >= target;
    if (!feasible && f_max_loc >= v) accepted = v;
  }
  return accepted;
}

}  // namespace detail

double lcp_threshold(const TestPointContext& ctx) {
  const LcpModel& m = ctx.model();
  return detail::lcp_sweep(ctx.below(), ctx.test_slot(), ctx.supmax(), m.residuals,
                           m.order, m.alpha, ctx.test_cdf());
}

double lcp_threshold(const LcpModel& model, std::span<const double> x) {
  TestPointContext ctx(model, x);
  return lcp_threshold(ctx);
}

namespace {

// Row summaries computed literally from an explicit weight matrix through
// the c.d.f. type itself.
struct RowArrays {
  std::vector<double> below, tslot, supmax;
  std::vector<std::uint32_t> order;
};

RowArrays arrays_from_rows(const std::vector<WeightVector>& rows,
                           const std::vector<double>& residuals) {
  const std::size_t n = residuals.size();
  if (rows.size() != n + 1)
    throw DataError("weight matrix must hold n calibration rows plus the test row");
  RowArrays a;
  a.below.resize(n);
  a.tslot.resize(n);
  a.supmax.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    StepCdf cdf = conditional_cdf(rows[i], residuals, kInf);
    a.below[i] = cdf.mass_below(residuals[i]);
    a.tslot[i] = rows[i].test_weight();
    a.supmax[i] = cdf.locations().empty() ? -kInf : cdf.locations().back();
  }
  a.order.resize(n);
  std::iota(a.order.begin(), a.order.end(), 0u);
  std::stable_sort(a.order.begin(), a.order.end(), [&](std::uint32_t x, std::uint32_t y) {
    return residuals[x] < residuals[y];
  });
  return a;
}

}  // namespace

double lcp_threshold_rows(const std::vector<WeightVector>& rows,
                          const std::vector<double>& residuals, double alpha) {
  RowArrays a = arrays_from_rows(rows, residuals);
  StepCdf test_cdf = conditional_cdf(rows.back(), residuals, kInf);
  return detail::lcp_sweep(a.below, a.tslot, a.supmax, residuals, a.order, alpha,
                           test_cdf);
}

namespace {

// Smallest quantile-jump level strictly above `crit` over every row at this
// test point: test-free rows from the model index (skipping reworked ones),
// reworked rows and the test row from the context; 1 closes the set.
double level_successor(const TestPointContext& ctx, double crit) {
  const LcpModel& m = ctx.model();
  double best = 1.0;
  auto it = std::upper_bound(m.base_levels.begin(), m.base_levels.end(),
                             std::make_pair(crit, ~0u));
  while (it != m.base_levels.end() && ctx.is_affected(it->second)) ++it;
  if (it != m.base_levels.end() && it->first < best) best = it->first;
  for (double v : ctx.affected_levels())
    if (v > crit && v < best) best = v;
  std::vector<double> test_levels;
  ctx.test_cdf().collect_levels(test_levels);
  for (double v : test_levels)
    if (v > crit && v < best) best = v;
  return best;
}

}  // namespace

double alpha_tilde(const LcpModel& model, const TestPointContext& ctx, double v) {
  if (v != kInf)
    throw StateError("context-based alpha_tilde serves v = +inf; use the x overload");
  const std::size_t n = model.n();
  const std::size_t need = min_feasible_count(n + 1, model.alpha);

  std::vector<double> levels(n);
  for (std::uint32_t i = 0; i < n; ++i)
    levels[i] = flip_level(ctx.below()[i], ctx.test_slot()[i], ctx.supmax()[i],
                           model.residuals[i], /*v_below_anchor=*/false);
  std::sort(levels.begin(), levels.end());

  const auto& tcums = ctx.test_cdf().cumulatives();
  const double l_self = tcums.empty() ? 0.0 : tcums.back();
  const bool e_self = ctx.test_row().test_weight() > 0.0;

  // Infimum of feasible levels: the coverage count is a step function of
  // the level, jumping just above flip levels, so feasibility holds exactly
  // for levels strictly greater than the critical value.
  double crit = kInf;
  if (need <= n) crit = levels[need - 1];
  if (e_self) {
    const double c = need >= 2 ? std::max(levels[need - 2], l_self) : l_self;
    if (c < crit) crit = c;
  }
  if (!(crit < kInf)) return 1.0;
  const double at = level_successor(ctx, crit);
  if (at > crit) {
    const std::size_t count = kernels::ops().count_lt(levels.data(), n, at) +
                              ((e_self && at > l_self) ? 1 : 0);
    if (count < need)
      throw NumericError("alpha_tilde: selected level misses the coverage target");
  }
  return at;
}

namespace {

std::vector<double> candidate_levels_rows(const std::vector<WeightVector>& rows,
                                          const std::vector<double>& residuals,
                                          double v) {
  std::vector<double> out = {0.0, 1.0};
  for (const WeightVector& row : rows)
    conditional_cdf(row, residuals, v).collect_levels(out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  while (!out.empty() && out.back() > 1.0) out.pop_back();
  return out;
}

}  // namespace

std::vector<double> candidate_levels(const LcpModel& model, std::span<const double> x,
                                     double v) {
  return candidate_levels_rows(cross_weight_matrix(model.localizer, x),
                               model.residuals, v);
}

double alpha_tilde_rows(const std::vector<WeightVector>& rows,
                        const std::vector<double>& residuals, double alpha, double v) {
  const std::size_t n = residuals.size();
  if (rows.size() != n + 1)
    throw DataError("weight matrix must hold n calibration rows plus the test row");
  std::vector<StepCdf> cdfs;
  cdfs.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    cdfs.push_back(conditional_cdf(rows[i], residuals, v));

  std::vector<double> gamma = candidate_levels_rows(rows, residuals, v);
  const double target = 1.0 - alpha;
  const double denom = static_cast<double>(n + 1);
  auto coverage = [&](double level) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
      count += residuals[i] <= cdfs[i].quantile(level);
    count += v <= cdfs[n].quantile(level);
    return static_cast<double>(count) / denom;
  };

  // binary search; the coverage sum is nondecreasing in the level
  std::size_t lo = 0, hi = gamma.size();
  double last_infeasible_cov = -1.0;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double cov = coverage(gamma[mid]);
    if (cov < last_infeasible_cov)
      throw NumericError("coverage sum decreased along the level grid");
    if (cov >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
      last_infeasible_cov = cov;
    }
  }
  return lo < gamma.size() ? gamma[lo] : 1.0;
}

double lcp_threshold_naive_rows(const std::vector<WeightVector>& rows,
                                const std::vector<double>& residuals, double alpha) {
  const std::size_t n = residuals.size();
  std::vector<double> sorted = residuals;
  std::sort(sorted.begin(), sorted.end());
  StepCdf f = conditional_cdf(rows.back(), residuals, kInf);
  double accepted = kEmptyThreshold;
  for (std::size_t k = 1; k <= n + 1; ++k) {
    const double v = k <= n ? sorted[k - 1] : kInf;
    const double at = alpha_tilde_rows(rows, residuals, alpha, v);
    if (v <= f.quantile(at)) accepted = v;
  }
  return accepted;
}

double alpha_tilde(const LcpModel& model, std::span<const double> x, double v) {
  if (v == kInf) {
    TestPointContext ctx(model, x);
    return alpha_tilde(model, ctx, v);
  }
  return alpha_tilde_rows(cross_weight_matrix(model.localizer, x), model.residuals,
                          model.alpha, v);
}

double lcp_threshold_naive(const LcpModel& model, std::span<const double> x) {
  return lcp_threshold_naive_rows(cross_weight_matrix(model.localizer, x),
                                  model.residuals, model.alpha);
}

TcModel tc_fit(const Dataset& d1, const Dataset& d2, const ForestParams& params,
               double alpha, std::size_t grid_size, bool fixed_level, double epsilon) {
  if (grid_size < 1) throw ConfigError("tc grid size must be >= 1");
  TcModel tc;
  tc.inner = lcp_fit(d1, params, alpha);
  tc.fixed_level = fixed_level;
  tc.epsilon = epsilon;
  tc.n2 = d2.rows();

  const std::size_t n2 = d2.rows();
  std::vector<double> base_level(n2);
  std::vector<StepCdf> cdfs(n2);
  parallel_for(n2, [&](std::size_t i) {
    TestPointContext ctx(tc.inner, d2.row(i));
    base_level[i] = fixed_level ? 1.0 - alpha : alpha_tilde(tc.inner, ctx, kInf);
    cdfs[i] = ctx.test_cdf();
  });

  tc.grid.resize(grid_size + 1);
  for (std::size_t j = 0; j <= grid_size; ++j)
    tc.grid[j] = alpha * static_cast<double>(j) / static_cast<double>(grid_size);

  const double target = 1.0 - alpha;
  std::vector<double> thresholds(n2);
  bool found = false;
  for (double g : tc.grid) {
    for (std::size_t i = 0; i < n2; ++i)
      thresholds[i] = cdfs[i].quantile(std::min(1.0, base_level[i] + g));
    const std::size_t covered =
        kernels::ops().count_leq_pairwise(d2.targets().data(), thresholds.data(), n2);
    if (static_cast<double>(covered) / static_cast<double>(n2) >= target) {
      tc.alpha_hat = g;
      found = true;
      break;
    }
  }
  if (!found) {
    tc.alpha_hat = alpha;
    tc.warn_no_feasible = true;
  }
  tc.delta = static_cast<double>(tc.grid.size()) *
             std::exp(-2.0 * static_cast<double>(n2) * epsilon * epsilon);
  return tc;
}

double tc_threshold(const TcModel& tc, std::span<const double> x) {
  TestPointContext ctx(tc.inner, x);
  const double level =
      tc.fixed_level ? 1.0 - tc.inner.alpha : alpha_tilde(tc.inner, ctx, kInf);
  return ctx.test_cdf().quantile(std::min(1.0, level + tc.alpha_hat));
}

double predict_threshold(const CalibrationState& state, std::span<const double> x) {
  switch (state.method) {
    case Method::kSplit:
      return split_threshold(state.residuals, state.alpha);
    case Method::kLcpRf:
      if (!state.lcp) throw StateError("lcp-rf state is not fitted");
      return lcp_threshold(*state.lcp, x);
    case Method::kQrfTc:
    case Method::kLcpRfTc:
      if (!state.tc) throw StateError("training-conditional state is not fitted");
      return tc_threshold(*state.tc, x);
  }
  throw StateError("unknown method");
}

}  // namespace conforest
