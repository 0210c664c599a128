#include "conforest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "conforest/exact_sum.hpp"
#include "conforest/kernels.hpp"

namespace conforest {

ResolvedParams resolve_params(const ForestParams& p, std::size_t n, std::size_t d) {
  ResolvedParams r;
  r.n_trees = p.n_trees;
  r.max_leaves = p.max_leaves;
  r.min_leaf_size = p.min_leaf_size != 0
                        ? p.min_leaf_size
                        : std::max<std::size_t>(
                              5, static_cast<std::size_t>(std::ceil(std::sqrt(
                                     static_cast<double>(n)) / 2.0)));
  r.mtry = p.mtry != 0 ? p.mtry
                       : static_cast<std::size_t>(
                             std::ceil(static_cast<double>(d) / 3.0));
  r.bootstrap_size = p.bootstrap_size != 0 ? p.bootstrap_size : n;
  r.bootstrap = p.bootstrap;
  r.seed = p.seed;
  if (r.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (r.mtry < 1 || r.mtry > d) throw ConfigError("mtry must lie in [1, d]");
  if (r.bootstrap_size < 1) throw ConfigError("bootstrap_size must be >= 1");
  if (n < r.min_leaf_size)
    throw DataError("fewer rows than min_leaf_size, cannot fit");
  return r;
}

std::int32_t Tree::route(std::span<const double> x) const {
  std::int32_t id = 0;
  while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(id)].leaf_id;
}

namespace {

struct PendingNode {
  std::int32_t node_id;
  std::vector<std::uint32_t> rows;  // in deterministic order
  double weight;                    // bootstrap population N
};

}  // namespace

class ForestBuilder {
 public:
  ForestBuilder(const Dataset& data, const ResolvedParams& params)
      : data_(data), params_(params) {}

  // Per-tree stream derived from (seed, tree index): tree construction is
  // identical for any thread count.
  static constexpr std::uint64_t kFitTag = 0xF17;

  Tree build(std::uint64_t tree_index) const {
    const std::size_t n = data_.rows();
    CounterRng rng = CounterRng(params_.seed, kFitTag).child(tree_index);

    std::vector<std::uint32_t> counts(n, 0);
    if (params_.bootstrap) {
      for (std::size_t i = 0; i < params_.bootstrap_size; ++i)
        counts[rng.next_below(n)]++;
    } else {
      std::fill(counts.begin(), counts.end(), 1u);
    }

    Tree tree;
    std::vector<std::uint32_t> root_rows;
    double root_weight = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (counts[i] > 0) {
        root_rows.push_back(i);
        root_weight += counts[i];
      }
    }

    tree.nodes.push_back(TreeNode{});
    std::deque<PendingNode> queue;
    queue.push_back({0, std::move(root_rows), root_weight});

    // scratch reused across nodes
    std::vector<std::uint32_t> order;
    std::vector<double> vals, pw, pwy;
    std::vector<std::uint32_t> feat_pool(data_.cols());

    while (!queue.empty()) {
      PendingNode node = std::move(queue.front());
      queue.pop_front();

      bool budget_ok = params_.max_leaves == 0 ||
                       tree.leaves.size() + queue.size() + 2 <= params_.max_leaves;
      std::int32_t split_feature = -1;
      double split_threshold = 0.0;
      if (budget_ok && node.weight >= 2.0 * static_cast<double>(params_.min_leaf_size) &&
          !pure(node.rows)) {
        find_split(node, rng, order, vals, pw, pwy, feat_pool, split_feature,
                   split_threshold, counts);
      }

      if (split_feature < 0) {
        finalize_leaf(tree, node, counts);
        continue;
      }

      PendingNode left{static_cast<std::int32_t>(tree.nodes.size()), {}, 0.0};
      PendingNode right{static_cast<std::int32_t>(tree.nodes.size()) + 1, {}, 0.0};
      for (std::uint32_t r : node.rows) {
        if (data_.feature(r, static_cast<std::size_t>(split_feature)) <= split_threshold) {
          left.rows.push_back(r);
          left.weight += counts[r];
        } else {
          right.rows.push_back(r);
          right.weight += counts[r];
        }
      }
      TreeNode& nd = tree.nodes[static_cast<std::size_t>(node.node_id)];
      nd.feature = split_feature;
      nd.threshold = split_threshold;
      nd.left = left.node_id;
      nd.right = right.node_id;
      tree.nodes.push_back(TreeNode{});
      tree.nodes.push_back(TreeNode{});
      queue.push_back(std::move(left));
      queue.push_back(std::move(right));
    }

    // route every training row for anchor lookups
    tree.anchor_leaf.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::int32_t leaf = tree.route(data_.row(i));
      tree.anchor_leaf[i] = leaf;
      tree.leaves[static_cast<std::size_t>(leaf)].routed.push_back(i);
    }
    return tree;
  }

 private:
  bool pure(const std::vector<std::uint32_t>& rows) const {
    double first = data_.target(rows[0]);
    for (std::uint32_t r : rows)
      if (data_.target(r) != first) return false;
    return true;
  }

  void finalize_leaf(Tree& tree, PendingNode& node,
                     const std::vector<std::uint32_t>& counts) const {
    Leaf leaf;
    leaf.members = std::move(node.rows);
    std::sort(leaf.members.begin(), leaf.members.end());
    leaf.counts.reserve(leaf.members.size());
    double wy = 0.0;
    for (std::uint32_t r : leaf.members) {
      leaf.counts.push_back(counts[r]);
      leaf.total_count += counts[r];
      wy += static_cast<double>(counts[r]) * data_.target(r);
    }
    leaf.weighted_target_sum = wy;
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(node.node_id)];
    nd.feature = -1;
    nd.leaf_id = static_cast<std::int32_t>(tree.leaves.size());
    tree.leaves.push_back(std::move(leaf));
  }

  void find_split(const PendingNode& node, CounterRng& rng,
                  std::vector<std::uint32_t>& order, std::vector<double>& vals,
                  std::vector<double>& pw, std::vector<double>& pwy,
                  std::vector<std::uint32_t>& feat_pool, std::int32_t& best_feature,
                  double& best_threshold, const std::vector<std::uint32_t>& counts) const {
    const std::size_t d = data_.cols();
    const std::size_t m = node.rows.size();

    // sample mtry distinct features, then visit in ascending index order so
    // equal gains resolve to the lowest feature index
    std::iota(feat_pool.begin(), feat_pool.end(), 0u);
    for (std::size_t i = 0; i < params_.mtry; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.next_below(d - i));
      std::swap(feat_pool[i], feat_pool[j]);
    }
    std::sort(feat_pool.begin(), feat_pool.begin() + static_cast<std::ptrdiff_t>(params_.mtry));

    order.resize(m);
    vals.resize(m);
    pw.resize(m);
    pwy.resize(m);

    double best_gain = -1.0;
    best_feature = -1;
    for (std::size_t fi = 0; fi < params_.mtry; ++fi) {
      const std::size_t f = feat_pool[fi];
      for (std::size_t i = 0; i < m; ++i) order[i] = static_cast<std::uint32_t>(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) {
                         return data_.feature(node.rows[a], f) <
                                data_.feature(node.rows[b], f);
                       });
      double cw = 0.0, cwy = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const std::uint32_t r = node.rows[order[i]];
        const double w = counts[r];
        vals[i] = data_.feature(r, f);
        cw += w;
        cwy += w * data_.target(r);
        pw[i] = cw;
        pwy[i] = cwy;
      }
      auto res = kernels::ops().best_split(
          vals.data(), pwy.data(), pw.data(), m, cwy, cw,
          static_cast<double>(params_.min_leaf_size));
      if (res.pos != kernels::SplitResult::npos && res.gain > best_gain) {
        best_gain = res.gain;
        best_feature = static_cast<std::int32_t>(f);
        const double a = vals[res.pos];
        const double b = vals[res.pos + 1];
        double thr = a + (b - a) / 2.0;
        if (!(thr < b)) thr = a;  // keep the right child strictly above
        best_threshold = thr;
      }
    }
  }

  const Dataset& data_;
  const ResolvedParams& params_;
};

Forest Forest::fit(const Dataset& data, const ForestParams& params) {
  Forest f;
  f.params_ = resolve_params(params, data.rows(), data.cols());
  f.n_rows_ = data.rows();
  f.n_cols_ = data.cols();
  f.targets_ = data.targets();

  f.rank_to_row_.resize(f.n_rows_);
  std::iota(f.rank_to_row_.begin(), f.rank_to_row_.end(), 0u);
  std::stable_sort(f.rank_to_row_.begin(), f.rank_to_row_.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return f.targets_[a] < f.targets_[b];
                   });
  f.target_rank_.resize(f.n_rows_);
  for (std::uint32_t r = 0; r < f.n_rows_; ++r) f.target_rank_[f.rank_to_row_[r]] = r;

  ForestBuilder builder(data, f.params_);
  f.trees_.resize(f.params_.n_trees);
  parallel_for(f.params_.n_trees,
               [&](std::size_t t) { f.trees_[t] = builder.build(t); });
  return f;
}

double Forest::predict_mean(std::span<const double> x) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  if (x.size() != n_cols_) throw DataError("feature count mismatch");
  double acc = 0.0;
  for (const Tree& t : trees_) {
    const Leaf& leaf = t.leaves[static_cast<std::size_t>(t.route(x))];
    acc += leaf.weighted_target_sum / static_cast<double>(leaf.total_count);
  }
  return acc / static_cast<double>(trees_.size());
}

double Forest::predict_quantile(std::span<const double> x, double beta) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  if (x.size() != n_cols_) throw DataError("feature count mismatch");
  if (!(beta >= 0.0 && beta <= 1.0)) throw NumericError("beta outside [0,1]");

  std::vector<double> w(n_rows_, 0.0);
  const double inv_k = 1.0 / static_cast<double>(trees_.size());
  for (const Tree& t : trees_) {
    const Leaf& leaf = t.leaves[static_cast<std::size_t>(t.route(x))];
    const double c = inv_k / static_cast<double>(leaf.total_count);
    for (std::size_t i = 0; i < leaf.members.size(); ++i)
      w[leaf.members[i]] += static_cast<double>(leaf.counts[i]) * c;
  }
  std::vector<Atom> atoms;
  atoms.reserve(n_rows_);
  for (std::uint32_t rank = 0; rank < n_rows_; ++rank) {
    const std::uint32_t row = rank_to_row_[rank];
    if (w[row] > 0.0) atoms.push_back({targets_[row], w[row]});
  }
  return weighted_quantile(beta, StepCdf::from_atoms(std::move(atoms)));
}

template <typename LeafOf>
void Forest::accumulate_row(LeafOf&& leaf_of, const std::vector<std::int32_t>* test_leaves,
                            std::vector<double>& w,
                            std::vector<std::uint32_t>& touched) const {
  const std::size_t n = n_rows_;
  const double inv_k = 1.0 / static_cast<double>(trees_.size());
  for (std::size_t l = 0; l < trees_.size(); ++l) {
    const std::int32_t leaf_id = leaf_of(l);
    const Leaf& leaf = trees_[l].leaves[static_cast<std::size_t>(leaf_id)];
    const bool test_here = test_leaves != nullptr && (*test_leaves)[l] == leaf_id;
    const double pop = static_cast<double>(leaf.total_count) + (test_here ? 1.0 : 0.0);
    const double c = inv_k / pop;
    for (std::size_t i = 0; i < leaf.members.size(); ++i) {
      const std::uint32_t j = leaf.members[i];
      if (w[j] == 0.0) touched.push_back(j);
      w[j] += static_cast<double>(leaf.counts[i]) * c;
    }
    if (test_here) w[n] += c;
  }
}

void Forest::accumulate_anchor_row(std::size_t anchor,
                                   const std::vector<std::int32_t>* test_leaves,
                                   std::vector<double>& w,
                                   std::vector<std::uint32_t>& touched) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  accumulate_row([&](std::size_t l) { return trees_[l].anchor_leaf[anchor]; },
                 test_leaves, w, touched);
}

WeightVector Forest::localizer_row(std::size_t anchor,
                                   std::span<const double> x_test) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  if (x_test.size() != n_cols_) throw DataError("feature count mismatch");
  std::vector<std::int32_t> test_leaves = route_all(x_test);

  WeightVector row;
  row.weights.assign(n_rows_ + 1, 0.0);
  accumulate_anchor_row(anchor, &test_leaves, row.weights, row.support);
  std::sort(row.support.begin(), row.support.end());
  return row;
}

WeightVector Forest::localizer_row_at(std::span<const double> anchor,
                                      std::span<const double> x_test) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  if (anchor.size() != n_cols_ || x_test.size() != n_cols_)
    throw DataError("feature count mismatch");
  std::vector<std::int32_t> anchor_leaves = route_all(anchor);
  std::vector<std::int32_t> test_leaves = route_all(x_test);

  WeightVector row;
  row.weights.assign(n_rows_ + 1, 0.0);
  accumulate_row([&](std::size_t l) { return anchor_leaves[l]; }, &test_leaves,
                 row.weights, row.support);
  std::sort(row.support.begin(), row.support.end());
  return row;
}

WeightVector Forest::base_row(std::size_t anchor) const {
  if (trees_.empty()) throw StateError("forest is not fitted");
  WeightVector row;
  row.weights.assign(n_rows_ + 1, 0.0);
  accumulate_anchor_row(anchor, nullptr, row.weights, row.support);
  std::sort(row.support.begin(), row.support.end());
  return row;
}

std::vector<std::int32_t> Forest::route_all(std::span<const double> x) const {
  std::vector<std::int32_t> leaves(trees_.size());
  for (std::size_t l = 0; l < trees_.size(); ++l) leaves[l] = trees_[l].route(x);
  return leaves;
}

std::vector<WeightVector> cross_weight_matrix(const Forest& forest,
                                              std::span<const double> x_test) {
  std::vector<WeightVector> rows(forest.n_rows() + 1);
  parallel_for(forest.n_rows(),
               [&](std::size_t i) { rows[i] = forest.localizer_row(i, x_test); });
  rows[forest.n_rows()] = forest.localizer_row_at(x_test, x_test);
  return rows;
}

StepCdf conditional_cdf(const WeightVector& row, const std::vector<double>& residuals,
                        double v) {
  if (row.weights.size() != residuals.size() + 1)
    throw DataError("weight row and residual lengths do not match");
  std::vector<Atom> atoms;
  atoms.reserve(residuals.size());
  for (std::size_t j = 0; j < residuals.size(); ++j) {
    if (row.weights[j] > 0.0) atoms.push_back({residuals[j], row.weights[j]});
  }
  return StepCdf::from_atoms_with_rider(std::move(atoms), v, row.weights.back());
}

}  // namespace conforest
