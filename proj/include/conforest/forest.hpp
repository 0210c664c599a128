#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "conforest/core.hpp"
#include "conforest/rng.hpp"

namespace conforest {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_leaves = 0;      // leaf budget t_n; 0 = unbounded
  std::size_t min_leaf_size = 0;   // 0 = auto: max(5, ceil(sqrt(n)/2))
  std::size_t mtry = 0;            // candidate features per node; 0 = auto: ceil(d/3)
  std::size_t bootstrap_size = 0;  // a_n; 0 = n
  bool bootstrap = true;           // false: every row enters each tree with count 1
  std::uint64_t seed = 0;
};

struct ResolvedParams {
  std::size_t n_trees, max_leaves, min_leaf_size, mtry, bootstrap_size;
  bool bootstrap;
  std::uint64_t seed;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1: leaf, leaf_id holds the payload
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf_id = -1;
};

struct Leaf {
  std::vector<std::uint32_t> members;  // rows with bootstrap count > 0, ascending
  std::vector<std::uint32_t> counts;   // B_n per member
  std::uint32_t total_count = 0;       // N: bootstrap population
  double weighted_target_sum = 0.0;    // sum of B * y over members
  std::vector<std::uint32_t> routed;   // every training row whose path ends here
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<Leaf> leaves;
  std::vector<std::int32_t> anchor_leaf;  // training row -> leaf id

  std::int32_t route(std::span<const double> x) const;
};

// Row-stochastic localizer weights over calibration slots 0..n-1 plus the
// test slot n.
struct WeightVector {
  std::vector<double> weights;           // length n+1
  std::vector<std::uint32_t> support;    // calibration indices with weight > 0
  double test_weight() const { return weights.back(); }
};

class Forest {
 public:
  Forest() = default;

  static Forest fit(const Dataset& data, const ForestParams& params);

  const ResolvedParams& params() const { return params_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t n_trees() const { return trees_.size(); }
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& targets() const { return targets_; }

  // Ensemble mean: average over trees of the leaf's bootstrap-weighted
  // target mean.
  double predict_mean(std::span<const double> x) const;

  // Weighted-c.d.f. quantile of the training targets at x (no test slot,
  // no infinity atom).
  double predict_quantile(std::span<const double> x, double beta) const;

  // Localizer row anchored at calibration row `anchor`: member j receives
  // sum over trees of B_j / (k * pop), where pop counts the test point as
  // one extra occupant in every tree whose anchor leaf also contains
  // x_test; the test slot receives 1 / (k * pop) from those trees. Rows
  // are probability vectors by construction.
  WeightVector localizer_row(std::size_t anchor, std::span<const double> x_test) const;

  // Same with the anchor given as a point (anchor == x_test gives the test
  // row n+1).
  WeightVector localizer_row_at(std::span<const double> anchor,
                                std::span<const double> x_test) const;

  // Anchor rows without any test point: the plain QRF weights used for the
  // calibration graph.
  WeightVector base_row(std::size_t anchor) const;

  // Leaves of x in every tree.
  std::vector<std::int32_t> route_all(std::span<const double> x) const;

  // Accumulates the localizer row of `anchor` into the dense buffer w
  // (length n+1 with touched positions zeroed by the caller between rows),
  // appending newly touched calibration indices to `touched`. When
  // test_leaves is given, the test point occupies every matching leaf and
  // w[n] collects the test-slot mass. Addition order is fixed (tree order),
  // so every caller reproduces identical weights bit for bit.
  void accumulate_anchor_row(std::size_t anchor,
                             const std::vector<std::int32_t>* test_leaves,
                             std::vector<double>& w,
                             std::vector<std::uint32_t>& touched) const;

  friend class ForestBuilder;
  friend struct ModelCodec;

 private:
  template <typename LeafOf>
  void accumulate_row(LeafOf&& leaf_of, const std::vector<std::int32_t>* test_leaves,
                      std::vector<double>& w, std::vector<std::uint32_t>& touched) const;

  std::vector<Tree> trees_;
  ResolvedParams params_{};
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<double> targets_;
  std::vector<std::uint32_t> target_rank_;  // row id -> rank in (target, id) order
  std::vector<std::uint32_t> rank_to_row_;
};

// All n+1 localizer rows for one test point; the test row is last.
std::vector<WeightVector> cross_weight_matrix(const Forest& forest,
                                              std::span<const double> x_test);

// Localizer c.d.f. F_i^v: calibration atoms at the residuals with the row's
// first n masses, the test slot as a rider atom at v (v may be +inf).
StepCdf conditional_cdf(const WeightVector& row, const std::vector<double>& residuals,
                        double v);

ResolvedParams resolve_params(const ForestParams& p, std::size_t n, std::size_t d);

}  // namespace conforest
