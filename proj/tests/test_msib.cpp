#include <gtest/gtest.h>

#include "mscod/errors.hpp"
#include "mscod/msib.hpp"
#include "test_util.hpp"

using namespace mscod;
using diff::Tensor;
using testutil::random_tensor;

namespace {

MsibWeights make_msib(std::size_t d, std::uint64_t seed, nn::ParamRegistry& reg) {
  return MsibWeights::make(nn::random_factory(reg, seed), "msib", d);
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Msib, BottleneckWidthsForD128) {
  EXPECT_EQ(bottleneck_width(0.125, 128), 16u);
  EXPECT_EQ(bottleneck_width(0.25, 128), 32u);
  EXPECT_EQ(bottleneck_width(0.5, 128), 64u);
  nn::ParamRegistry reg;
  const auto w = make_msib(128, 1, reg);
  ASSERT_EQ(w.pathways.size(), 3u);
  EXPECT_EQ(w.pathways[0].encoder.weight.dim(0), 16u);
  EXPECT_EQ(w.pathways[1].encoder.weight.dim(0), 32u);
  EXPECT_EQ(w.pathways[2].encoder.weight.dim(0), 64u);
  EXPECT_EQ(w.pathways[2].decoder.weight.dim(0), 128u);
}

TEST(Msib, InvalidRatioIsConfigError) {
  EXPECT_THROW(bottleneck_width(0.0, 16), ConfigError);
  EXPECT_THROW(bottleneck_width(1.5, 16), ConfigError);
}

TEST(Msib, ZeroDecoderGivesExactIdentityFusion) {
  Rng rng(7);
  nn::ParamRegistry reg;
  auto w = make_msib(32, 2, reg);
  for (auto& p : w.pathways) {
    std::fill(p.decoder.weight.mutable_values().begin(), p.decoder.weight.mutable_values().end(), 0.0);
    std::fill(p.decoder.bias.mutable_values().begin(), p.decoder.bias.mutable_values().end(), 0.0);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor h = random_tensor({5, 32}, rng, 3.0);
    const Tensor f = msib_fusion(h, w);
    EXPECT_EQ(to_vec(f), to_vec(h));
  }
}

TEST(Msib, PathwaysAreNonNegative) {
  Rng rng(8);
  nn::ParamRegistry reg;
  const auto w = make_msib(16, 3, reg);
  const Tensor h = random_tensor({7, 16}, rng, 2.0);
  for (const auto& p : w.pathways) {
    const Tensor out = msib_pathway(h, p);
    for (double v : out.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(Msib, RowPermutationEquivariant) {
  Rng rng(9);
  nn::ParamRegistry reg;
  const auto w = make_msib(16, 4, reg);
  const Tensor h = random_tensor({6, 16}, rng);
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  const Tensor a = diff::gather_rows(msib_forward(h, w), perm);
  const Tensor b = msib_forward(diff::gather_rows(h, perm), w);
  EXPECT_LE(testutil::max_abs_diff(a.values(), b.values()), 1e-13);
}

TEST(Msib, WrongInputWidthIsDimensionError) {
  nn::ParamRegistry reg;
  const auto w = make_msib(16, 5, reg);
  EXPECT_THROW(msib_forward(Tensor::zeros({3, 8}), w), DimensionError);
}

TEST(Msib, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  nn::ParamRegistry reg;
  const auto w = make_msib(16, 6, reg);
  // Zero-initialised biases put dead rows exactly on a ReLU kink; move them off it.
  for (auto& e : reg.entries())
    for (auto& v : e.tensor.mutable_values()) v += 0.1 * rng.normal();
  Tensor h = random_tensor({4, 16}, rng, 1.0, true);
  const Tensor probe = random_tensor({4, 16}, rng);
  auto params = reg.entries();
  params.push_back({"h", h});
  const auto report = diff::finite_difference_check(
      [&] { return diff::sum(diff::mul(msib_forward(h, w), probe)); }, params);
  for (const auto& e : report) EXPECT_LE(e.relative_error, 1e-6) << e.name;
}
