#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "conforest/exact_sum.hpp"
#include "conforest/forest.hpp"

using namespace conforest;

namespace {

Dataset line_step_data() {
  // 1-D x in {0..9}, y = 1[x >= 5]
  std::vector<double> f, t;
  for (int i = 0; i < 10; ++i) {
    f.push_back(static_cast<double>(i));
    t.push_back(i >= 5 ? 1.0 : 0.0);
  }
  return Dataset(f, 1, t);
}

Dataset rand_dataset(CounterRng& rng, std::size_t n, std::size_t d) {
  std::vector<double> f(n * d), t(n);
  for (double& x : f) x = rng.next_double();
  for (double& y : t) y = rng.next_double() * 4.0 - 2.0;
  return Dataset(std::move(f), d, std::move(t));
}

bool trees_equal(const Tree& a, const Tree& b) {
  if (a.nodes.size() != b.nodes.size() || a.leaves.size() != b.leaves.size())
    return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    if (a.nodes[i].feature != b.nodes[i].feature ||
        a.nodes[i].threshold != b.nodes[i].threshold ||
        a.nodes[i].left != b.nodes[i].left || a.nodes[i].right != b.nodes[i].right ||
        a.nodes[i].leaf_id != b.nodes[i].leaf_id)
      return false;
  }
  for (std::size_t i = 0; i < a.leaves.size(); ++i) {
    if (a.leaves[i].members != b.leaves[i].members ||
        a.leaves[i].counts != b.leaves[i].counts ||
        a.leaves[i].routed != b.leaves[i].routed)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("min_leaf_size at n yields single-leaf trees") {
  CounterRng rng(3, Stream::kTest);
  Dataset data = rand_dataset(rng, 10, 3);
  ForestParams p;
  p.n_trees = 7;
  p.min_leaf_size = 10;
  p.mtry = 3;
  p.seed = 5;
  Forest f = Forest::fit(data, p);
  for (const Tree& t : f.trees()) {
    CHECK(t.leaves.size() == 1);
    CHECK(t.leaves[0].total_count == 10);
  }
}

TEST_CASE("CART splits the step function at the jump") {
  Dataset data = line_step_data();
  ForestParams p;
  p.n_trees = 1;
  p.min_leaf_size = 1;
  p.mtry = 1;
  p.bootstrap = false;
  p.seed = 9;
  Forest f = Forest::fit(data, p);
  const Tree& t = f.trees()[0];
  REQUIRE(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold > 4.0);
  CHECK(t.nodes[0].threshold < 5.0);
  // both children pure
  std::int32_t left = t.nodes[0].left;
  std::int32_t right = t.nodes[0].right;
  CHECK(t.nodes[static_cast<std::size_t>(left)].feature == -1);
  CHECK(t.nodes[static_cast<std::size_t>(right)].feature == -1);

  // exhaustive scan by hand: gain(p) = SL^2/(p+1) + SR^2/(9-p), S = 5
  double best = -1.0;
  std::size_t best_p = 99;
  for (std::size_t pos = 0; pos + 1 < 10; ++pos) {
    double sl = pos >= 5 ? static_cast<double>(pos - 4) : 0.0;
    double sr = 5.0 - sl;
    double g = sl * sl / static_cast<double>(pos + 1) +
               sr * sr / static_cast<double>(9 - pos);
    if (g > best) {
      best = g;
      best_p = pos;
    }
  }
  CHECK(best_p == 4);  // the fitted threshold separates x=4 from x=5

  CHECK(f.predict_mean(std::vector<double>{0.9}) == 0.0);
  CHECK(f.predict_mean(std::vector<double>{8.0}) == 1.0);
}

TEST_CASE("fit is deterministic given the seed, independent of thread count") {
  CounterRng rng(4, Stream::kTest);
  Dataset data = rand_dataset(rng, 60, 4);
  ForestParams p;
  p.n_trees = 12;
  p.min_leaf_size = 3;
  p.seed = 77;

  Forest a = Forest::fit(data, p);
  setenv("CONFOREST_THREADS", "1", 1);
  Forest b = Forest::fit(data, p);
  unsetenv("CONFOREST_THREADS");
  REQUIRE(a.n_trees() == b.n_trees());
  for (std::size_t t = 0; t < a.n_trees(); ++t)
    CHECK(trees_equal(a.trees()[t], b.trees()[t]));

  std::vector<double> q = {0.2, 0.8, 0.5, 0.1};
  CHECK(a.predict_mean(q) == b.predict_mean(q));
  CHECK(a.predict_quantile(q, 0.7) == b.predict_quantile(q, 0.7));
  WeightVector ra = a.localizer_row(5, q);
  WeightVector rb = b.localizer_row(5, q);
  CHECK(ra.weights == rb.weights);
}

TEST_CASE("localizer rows on a single uniform leaf") {
  CounterRng rng(6, Stream::kTest);
  Dataset data = rand_dataset(rng, 9, 2);
  ForestParams p;
  p.n_trees = 4;
  p.min_leaf_size = 9;
  p.bootstrap = false;
  p.seed = 2;
  Forest f = Forest::fit(data, p);

  std::vector<double> x = {0.5, 0.5};
  WeightVector row = f.localizer_row(3, x);
  REQUIRE(row.weights.size() == 10);
  for (double w : row.weights) CHECK(w == doctest::Approx(0.1).epsilon(1e-13));

  // anchor == test point matches the dedicated test-row accessor
  WeightVector self = f.localizer_row_at(data.row(3), data.row(3));
  WeightVector via = f.localizer_row(3, data.row(3));
  CHECK(self.weights == via.weights);
}

TEST_CASE("two-leaf tree: no cross-block mass, test slot zero across the split") {
  // x < 0.5 -> y = 0, x > 0.5 -> y = 1; the root splits at 0.5
  std::vector<double> f = {0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> t = {0, 0, 0, 0, 1, 1, 1, 1};
  Dataset data(f, 1, t);
  ForestParams p;
  p.n_trees = 1;
  p.min_leaf_size = 1;
  p.mtry = 1;
  p.bootstrap = false;
  p.seed = 3;
  Forest fr = Forest::fit(data, p);

  std::vector<double> x_right = {0.7};
  WeightVector row = fr.localizer_row(0, x_right);  // anchor on the left
  CHECK(row.test_weight() == 0.0);
  for (std::size_t j = 0; j < 4; ++j) CHECK(row.weights[j] == 0.25);
  for (std::size_t j = 4; j < 8; ++j) CHECK(row.weights[j] == 0.0);
  CHECK(row.support == std::vector<std::uint32_t>{0, 1, 2, 3});

  // cross matrix is block structured; the test slot only in the right block
  auto m = cross_weight_matrix(fr, x_right);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 4; j < 8; ++j) {
      CHECK(m[i].weights[j] == 0.0);
      CHECK(m[j].weights[i] == 0.0);
    }
    CHECK(m[i].test_weight() == 0.0);
  }
  for (std::size_t i = 4; i < 8; ++i) CHECK(m[i].test_weight() == 0.2);
  CHECK(m[8].test_weight() == 0.2);  // the test row itself
}

TEST_CASE("weight vectors are stochastic and sparsity follows leaf sharing") {
  CounterRng rng(8, Stream::kTest);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 12 + rng.next_below(40);
    Dataset data = rand_dataset(rng, n, 3);
    ForestParams p;
    p.n_trees = 1 + rng.next_below(12);
    p.min_leaf_size = 1 + rng.next_below(4);
    p.mtry = 1 + rng.next_below(3);
    p.seed = rng.next_u64();
    Forest f = Forest::fit(data, p);

    std::vector<double> x = {rng.next_double(), rng.next_double(), rng.next_double()};
    std::size_t anchor = rng.next_below(n);
    WeightVector row = f.localizer_row(anchor, x);

    ExactSum total;
    for (double w : row.weights) {
      CHECK(w >= 0.0);
      total.add(w);
    }
    CHECK(std::fabs(total.round() - 1.0) <= 1e-9);

    // weight on j nonzero only when j shares a leaf with the anchor somewhere
    auto test_leaves = f.route_all(x);
    for (std::uint32_t j = 0; j < n; ++j) {
      bool shares = false;
      for (std::size_t l = 0; l < f.n_trees(); ++l) {
        const Tree& tr = f.trees()[l];
        if (tr.anchor_leaf[anchor] == tr.anchor_leaf[j]) {
          const Leaf& leaf = tr.leaves[static_cast<std::size_t>(tr.anchor_leaf[anchor])];
          if (std::binary_search(leaf.members.begin(), leaf.members.end(), j)) {
            shares = true;
            break;
          }
        }
      }
      if (!shares) CHECK(row.weights[j] == 0.0);
    }
  }
}

TEST_CASE("degenerate localizer reduces to the split-conformal cdf") {
  CounterRng rng(10, Stream::kTest);
  Dataset data = rand_dataset(rng, 11, 2);
  ForestParams p;
  p.n_trees = 3;
  p.min_leaf_size = 11;
  p.bootstrap = false;
  p.seed = 4;
  Forest f = Forest::fit(data, p);

  std::vector<double> x = {0.3, 0.3};
  auto m = cross_weight_matrix(f, x);
  for (const auto& row : m)
    for (double w : row.weights) CHECK(w == doctest::Approx(1.0 / 12).epsilon(1e-13));

  std::vector<double> residuals(data.targets());
  StepCdf lhs = conditional_cdf(m[11], residuals, kInf);
  StepCdf rhs = empirical_split_cdf(residuals);
  for (double beta : {0.05, 0.3, 0.55, 0.8, 0.95}) {
    CHECK(weighted_quantile(beta, lhs) == weighted_quantile(beta, rhs));
  }
}

TEST_CASE("conditional_cdf examples") {
  WeightVector row;
  row.weights = {0.25, 0.25, 0.25, 0.25};
  row.support = {0, 1, 2};
  std::vector<double> residuals = {1.0, 2.0, 3.0};

  StepCdf with_dup = conditional_cdf(row, residuals, 2.0);
  CHECK(with_dup.mass_below(2.0) == 0.25);
  CHECK(with_dup.mass_below(3.0) == 0.75);
  CHECK(weighted_quantile(0.5, with_dup) == 2.0);
  CHECK(weighted_quantile(0.76, with_dup) == 3.0);

  // zero test mass: the cdf ignores v entirely
  WeightVector flat;
  flat.weights = {0.5, 0.3, 0.2, 0.0};
  flat.support = {0, 1, 2};
  StepCdf a = conditional_cdf(flat, residuals, 1.5);
  StepCdf b = conditional_cdf(flat, residuals, kInf);
  for (double beta : {0.1, 0.45, 0.72, 0.99})
    CHECK(weighted_quantile(beta, a) == weighted_quantile(beta, b));

  CHECK_THROWS_AS(conditional_cdf(flat, {1.0, 2.0}, 1.0), DataError);
}

TEST_CASE("predict_mean examples") {
  CounterRng rng(12, Stream::kTest);
  Dataset data = rand_dataset(rng, 8, 2);
  ForestParams p;
  p.n_trees = 5;
  p.min_leaf_size = 8;
  p.bootstrap = false;
  p.seed = 6;
  Forest f = Forest::fit(data, p);
  double mean = 0.0;
  for (double y : data.targets()) mean += y;
  mean /= 8.0;
  CHECK(f.predict_mean(std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(mean).epsilon(1e-13));

  // constant targets
  Dataset cdata({0.1, 0.4, 0.9, 0.2, 0.7, 0.3}, 1, {3.25, 3.25, 3.25, 3.25, 3.25, 3.25});
  ForestParams cp;
  cp.n_trees = 4;
  cp.min_leaf_size = 1;
  cp.mtry = 1;
  cp.seed = 8;
  Forest cf = Forest::fit(cdata, cp);
  CHECK(cf.predict_mean(std::vector<double>{0.55}) == doctest::Approx(3.25).epsilon(1e-14));

  Forest unfitted;
  CHECK_THROWS_AS(unfitted.predict_mean(std::vector<double>{1.0}), StateError);
}

TEST_CASE("predict_quantile examples") {
  std::vector<double> f, t;
  for (int i = 1; i <= 10; ++i) {
    f.push_back(static_cast<double>(i) / 10.0);
    t.push_back(static_cast<double>(i));  // targets 1..10
  }
  Dataset data(f, 1, t);
  ForestParams p;
  p.n_trees = 3;
  p.min_leaf_size = 10;
  p.bootstrap = false;
  p.seed = 21;
  Forest fr = Forest::fit(data, p);

  std::vector<double> x = {0.5};
  CHECK(fr.predict_quantile(x, 0.5) == 5.0);   // cumulative reaches 0.5 at the 5th
  CHECK(fr.predict_quantile(x, 1.0) == 10.0);  // max target
  CHECK(fr.predict_quantile(x, 0.9) == 9.0);   // 9th order statistic
  CHECK_THROWS_AS(fr.predict_quantile(x, 1.5), NumericError);
}
