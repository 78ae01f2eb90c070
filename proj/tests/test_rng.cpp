#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mscod/rng.hpp"

using mscod::derive_seed;
using mscod::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, NamedStreamsAreDistinct) {
  std::set<std::uint64_t> seeds;
  for (const char* name : {"data", "train", "sample", "init"})
    for (std::uint64_t i = 0; i < 50; ++i) seeds.insert(derive_seed(7, name, i));
  EXPECT_EQ(seeds.size(), 200u);
  EXPECT_NE(derive_seed(7, "data"), derive_seed(8, "data"));
}

TEST(Rng, UniformStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMomentsMatchMonteCarloTolerance) {
  Rng r(5);
  const int n = 200000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z, s2 += z * z;
  }
  const double mean = s1 / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Rng, UniformIntIsRoughlyFlat) {
  Rng r(9);
  const int k = 6, n = 60000;
  std::vector<int> hist(k);
  for (int i = 0; i < n; ++i) ++hist[r.uniform_int(k)];
  double chi2 = 0;
  for (int h : hist) chi2 += (h - n / k) * (h - n / k) / double(n / k);
  EXPECT_LT(chi2, 20.5);  // chi-square, 5 dof, p ~ 0.001
}
