#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "conforest/core.hpp"
#include "conforest/exact_sum.hpp"
#include "conforest/rng.hpp"

using namespace conforest;

namespace {

// Independent quantile oracle: sort atoms, scan cumulative sums, first
// location whose cumulative reaches beta. Shares only the exact-summation
// primitive with the implementation, not the search/rider logic.
double naive_quantile(double beta, std::vector<Atom> atoms) {
  std::stable_sort(atoms.begin(), atoms.end(),
                   [](const Atom& a, const Atom& b) { return a.location < b.location; });
  ExactSum cum;
  double last = atoms.back().location;
  std::size_t i = 0;
  while (i < atoms.size()) {
    std::size_t j = i;
    ExactSum group;
    while (j < atoms.size() && atoms[j].location == atoms[i].location) {
      group.add(atoms[j].mass);
      ++j;
    }
    cum.add(group.round());
    if (cum.round() >= beta) return atoms[i].location;
    i = j;
  }
  return last;
}

std::vector<Atom> random_atoms(CounterRng& rng, bool with_inf) {
  std::size_t n = 1 + rng.next_below(12);
  std::vector<Atom> atoms;
  std::vector<double> masses(n + (with_inf ? 1 : 0));
  for (double& m : masses) m = rng.next_double() + 1e-3;
  double total = 0.0;
  for (double m : masses) total += m;
  for (std::size_t i = 0; i < n; ++i) {
    // few distinct locations so duplicates are common
    double loc = std::floor(rng.next_double() * 6.0);
    atoms.push_back({loc, masses[i] / total});
  }
  if (with_inf) atoms.push_back({kInf, masses[n] / total});
  return atoms;
}

}  // namespace

TEST_CASE("exact sum is order independent") {
  CounterRng rng(7, Stream::kTest);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.next_below(40);
    std::vector<double> xs(n);
    for (double& x : xs) {
      double scale = std::pow(10.0, static_cast<double>(rng.next_below(13)) - 6.0);
      x = rng.next_double() * scale;
    }
    double ref = exact_sum(xs);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<std::uint32_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
      shuffle_indices(order, rng);
      ExactSum acc;
      for (std::uint32_t i : order) acc.add(xs[i]);
      CHECK(acc.round() == ref);
    }
  }
}

TEST_CASE("exact sum rounds correctly at known boundaries") {
  ExactSum nine;
  for (int i = 0; i < 9; ++i) nine.add(0.1);
  CHECK(nine.round() == 0.9);

  ExactSum mixed;
  mixed.add(1e100);
  mixed.add(1.0);
  mixed.add(-1e100);
  CHECK(mixed.round() == 1.0);
}

TEST_CASE("weighted_quantile examples") {
  StepCdf two = StepCdf::from_atoms({{1.0, 0.5}, {2.0, 0.5}});
  CHECK(weighted_quantile(0.5, two) == 1.0);
  CHECK(weighted_quantile(0.75, two) == 2.0);

  std::vector<Atom> atoms;
  for (int i = 1; i <= 9; ++i) atoms.push_back({0.1 * i, 0.1});
  atoms.push_back({kInf, 0.1});
  StepCdf ten = StepCdf::from_atoms(atoms);
  CHECK(weighted_quantile(0.95, ten) == kInf);
  CHECK(weighted_quantile(0.9, ten) == 0.1 * 9);  // cumulative hits 0.9 at the 9th atom

  CHECK(weighted_quantile(0.0, two) == 1.0);
  CHECK(weighted_quantile(1.0, two) == 2.0);
  CHECK_THROWS_AS(weighted_quantile(-0.1, two), NumericError);
  CHECK_THROWS_AS(weighted_quantile(1.5, two), NumericError);
}

TEST_CASE("empirical_split_cdf examples") {
  StepCdf one = empirical_split_cdf({2.0});
  REQUIRE(one.size() == 2);
  CHECK(one.locations()[0] == 2.0);
  CHECK(one.masses()[0] == 0.5);
  CHECK(one.locations()[1] == kInf);
  CHECK(one.masses()[1] == 0.5);

  StepCdf merged = empirical_split_cdf({1.0, 1.0, 3.0});
  REQUIRE(merged.size() == 3);
  CHECK(merged.masses()[0] == 0.5);
  CHECK(merged.masses()[1] == 0.25);
  CHECK(merged.masses()[2] == 0.25);

  std::vector<double> nine;
  for (int i = 0; i < 9; ++i) nine.push_back(static_cast<double>(i));
  StepCdf c9 = empirical_split_cdf(nine);
  REQUIRE(c9.size() == 10);
  for (double m : c9.masses()) CHECK(m == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(c9.is_normalized());

  CHECK_THROWS_AS(empirical_split_cdf({}), DataError);
}

TEST_CASE("merge_duplicates examples") {
  StepCdf a = merge_duplicates({{1.0, 0.2}, {1.0, 0.3}});
  REQUIRE(a.size() == 1);
  CHECK(a.masses()[0] == 0.5);

  CHECK_THROWS_AS(merge_duplicates({}), DataError);
  CHECK_THROWS_AS(merge_duplicates({{1.0, -0.25}}), DataError);

  StepCdf b = merge_duplicates({{2.0, 0.5}, {1.0, 0.5}});
  REQUIRE(b.size() == 2);
  CHECK(b.locations()[0] == 1.0);
  CHECK(b.locations()[1] == 2.0);
}

TEST_CASE("quantile is monotone in beta and matches the naive oracle") {
  CounterRng rng(11, Stream::kTest);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Atom> atoms = random_atoms(rng, trial % 3 == 0);
    StepCdf cdf = StepCdf::from_atoms(atoms);

    double b1 = rng.next_double();
    double b2 = rng.next_double();
    if (b1 > b2) std::swap(b1, b2);
    double q1 = weighted_quantile(b1, cdf);
    double q2 = weighted_quantile(b2, cdf);
    CHECK(q1 <= q2);

    CHECK(weighted_quantile(b1, cdf) == naive_quantile(b1, atoms));
    // boundary probes: the cdf's own cumulative levels
    for (double level : cdf.cumulatives()) {
      if (level <= 1.0) CHECK(weighted_quantile(level, cdf) == naive_quantile(level, atoms));
    }
  }
}

TEST_CASE("rider atom behaves like a merged atom away from mass boundaries") {
  CounterRng rng(13, Stream::kTest);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Atom> atoms = random_atoms(rng, false);
    double scale = 0.8;
    for (Atom& a : atoms) a.mass *= scale;
    double rider_mass = 1.0 - scale;  // keep total at 1
    double rider_loc = std::floor(rng.next_double() * 8.0) - 1.0;

    StepCdf with_rider =
        StepCdf::from_atoms_with_rider(atoms, rider_loc, rider_mass);
    std::vector<Atom> merged_atoms = atoms;
    merged_atoms.push_back({rider_loc, rider_mass});
    StepCdf merged = StepCdf::from_atoms(merged_atoms);

    double beta = rng.next_double();
    CHECK(weighted_quantile(beta, with_rider) == weighted_quantile(beta, merged));
    CHECK(with_rider.total_mass() == doctest::Approx(merged.total_mass()).epsilon(1e-12));
    double t = std::floor(rng.next_double() * 8.0) - 1.0;
    CHECK(with_rider.mass_below(t) ==
          doctest::Approx(merged.mass_below(t)).epsilon(1e-12));
  }
}

TEST_CASE("split-conformal order statistic identity") {
  CounterRng rng(17, Stream::kTest);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.next_below(60);
    std::vector<double> residuals(n);
    for (double& r : residuals) r = rng.next_double() * 10.0;
    std::sort(residuals.begin(), residuals.end());
    residuals.erase(std::unique(residuals.begin(), residuals.end()), residuals.end());
    n = residuals.size();

    double alpha = 0.02 + 0.4 * rng.next_double();
    double beta = 1.0 - alpha;
    std::size_t idx =
        static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n + 1)));
    double got = weighted_quantile(beta, empirical_split_cdf(residuals));
    if (idx <= n)
      CHECK(got == residuals[idx - 1]);
    else
      CHECK(got == kInf);
  }
  // the alpha = 0.1, n = 9 boundary case lands exactly on the cumulative
  std::vector<double> nine = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  CHECK(weighted_quantile(1.0 - 0.1, empirical_split_cdf(nine)) == 0.9);
}

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(Dataset({1.0, 2.0}, 2, {}), DataError);
  CHECK_THROWS_AS(Dataset({1.0, kInf}, 2, {0.0}), DataError);
  CHECK_THROWS_AS(Dataset({1.0, 2.0, 3.0}, 2, {0.0}), DataError);
  Dataset d({1.0, 2.0, 3.0, 4.0}, 2, {10.0, 20.0});
  CHECK(d.rows() == 2);
  CHECK(d.cols() == 2);
  CHECK(d.feature(1, 0) == 3.0);
  CHECK_THROWS_AS(MiscoverageLevel(0.0), ConfigError);
  CHECK_THROWS_AS(MiscoverageLevel(1.0), ConfigError);
}
