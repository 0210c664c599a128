#include <doctest.h>

#include <cmath>
#include <vector>

#include "conforest/rng.hpp"

using namespace conforest;

TEST_CASE("counter rng: determinism and random access") {
  CounterRng a(42, Stream::kData);
  CounterRng b(42, Stream::kData);
  std::vector<std::uint64_t> seq;
  for (int i = 0; i < 16; ++i) seq.push_back(a.next_u64());
  for (int i = 0; i < 16; ++i) {
    CHECK(seq[static_cast<std::size_t>(i)] == b.at(static_cast<std::uint64_t>(i)));
  }
  CounterRng c(42, Stream::kBaseModel);
  CHECK(c.next_u64() != seq[0]);  // distinct stream
  CHECK(CounterRng(42, Stream::kData).child(3).next_u64() !=
        CounterRng(42, Stream::kData).child(4).next_u64());
}

TEST_CASE("uniform doubles live in [0,1) and look uniform") {
  CounterRng rng(1, Stream::kTest);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("inverse normal cdf matches reference values") {
  // reference: scipy.stats.norm.ppf
  CHECK(CounterRng::inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(CounterRng::inverse_normal_cdf(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(CounterRng::inverse_normal_cdf(0.95) ==
        doctest::Approx(1.6448536269514722).epsilon(1e-14));
  CHECK(CounterRng::inverse_normal_cdf(0.9) ==
        doctest::Approx(1.2815515655446004).epsilon(1e-14));
  CHECK(CounterRng::inverse_normal_cdf(0.4) ==
        doctest::Approx(-0.2533471031357997).epsilon(1e-14));
  CHECK(CounterRng::inverse_normal_cdf(1e-10) ==
        doctest::Approx(-6.361340902404056).epsilon(1e-14));
  CHECK(CounterRng::inverse_normal_cdf(0.025) ==
        doctest::Approx(-1.9599639845400545).epsilon(1e-14));
  // symmetry
  for (double p : {0.001, 0.123, 0.31, 0.499}) {
    CHECK(CounterRng::inverse_normal_cdf(p) ==
          doctest::Approx(-CounterRng::inverse_normal_cdf(1.0 - p)).epsilon(1e-12));
  }
  CHECK_THROWS(CounterRng::inverse_normal_cdf(0.0));
  CHECK_THROWS(CounterRng::inverse_normal_cdf(1.0));
}

TEST_CASE("normal deviates have the right first two moments") {
  CounterRng rng(5, Stream::kTest);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.next_normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(s1 / n == doctest::Approx(0.0).epsilon(0.01));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  CounterRng r1(9, Stream::kSplit);
  CounterRng r2(9, Stream::kSplit);
  std::vector<std::uint32_t> a(100), b(100);
  for (std::uint32_t i = 0; i < 100; ++i) a[i] = b[i] = i;
  shuffle_indices(a, r1);
  shuffle_indices(b, r2);
  CHECK(a == b);
  std::vector<std::uint32_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::uint32_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
}
