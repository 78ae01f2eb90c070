#include <gtest/gtest.h>

#include "mscod/check.hpp"
#include "mscod/errors.hpp"
#include "mscod/train.hpp"
#include "test_util.hpp"

using namespace mscod;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  return cfg;
}

std::vector<Complex> batch_of(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Complex> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(check::random_complex(rng, 8, 3, 4, 6));
  return out;
}

std::vector<double> flatten(const ModelWeights& w) {
  std::vector<double> v;
  for (const auto& e : w.registry().entries()) v.insert(v.end(), e.tensor.values().begin(), e.tensor.values().end());
  return v;
}

}  // namespace

TEST(Train, AdamMatchesHandComputation) {
  nn::ParamRegistry reg;
  reg.add("p", diff::Tensor({2}, {1.0, -1.0}, true));
  Adam adam(reg, {0.1, 0.9, 0.999, 1e-8});
  adam.step(reg, {{2.0, -0.5}});
  // First step: bias-corrected moments equal g and g^2, so the move is lr * sign(g).
  EXPECT_NEAR(reg.entries()[0].tensor.values()[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(reg.entries()[0].tensor.values()[1], -1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  adam.step(reg, {{1.0, 0.0}});
  const double m = 0.9 * 0.2 + 0.1 * 1.0, v = 0.999 * 0.004 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(reg.entries()[0].tensor.values()[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8),
              1e-15);
  EXPECT_EQ(adam.steps(), 2u);
  EXPECT_THROW(adam.step(reg, {}), DimensionError);
}

TEST(Train, ZeroLearningRateLeavesWeightsBitIdentical) {
  const auto batch = batch_of(2, 1);
  ModelWeights w = ModelWeights::random(tiny_config(), 2);
  const auto before = flatten(w);
  Adam adam(w.registry(), {0.0});
  const auto sched = schedule_new(10, 0.03, 1.0);
  const auto r = train_step(batch, w, sched, adam, 3);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_EQ(flatten(w), before);
}

TEST(Train, StepIsDeterministicAndThreadIndependent) {
  const auto batch = batch_of(4, 4);
  const auto sched = schedule_new(10, 0.03, 1.0);
  std::vector<std::vector<double>> results;
  std::vector<double> losses;
  for (std::size_t threads : {1, 1, 2, 4}) {
    ModelWeights w = ModelWeights::random(tiny_config(), 5);
    Adam adam(w.registry(), {});
    double trace = 0;
    for (std::uint64_t s = 0; s < 3; ++s) trace += train_step(batch, w, sched, adam, 100 + s, {10.0, threads}).loss;
    results.push_back(flatten(w));
    losses.push_back(trace);
  }
  for (std::size_t k = 1; k < results.size(); ++k) {
    EXPECT_EQ(results[k], results[0]) << "run " << k;
    EXPECT_EQ(losses[k], losses[0]);
  }
}

TEST(Train, BatchGradientIsMeanOfItemGradients) {
  // Oracle: rebuild every item loss from its derived stream and average.
  const auto batch = batch_of(3, 6);
  const auto sched = schedule_new(10, 0.03, 1.0);
  ModelWeights w = ModelWeights::random(tiny_config(), 7);
  const ModelWeights start = w.clone();
  Adam adam(w.registry(), {1e-3});
  const auto r = train_step(batch, w, sched, adam, 42, {0.0, 1});

  ModelWeights ref = start.clone();
  double loss = 0;
  std::vector<std::vector<double>> g(ref.registry().entries().size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(derive_seed(42, "item", b));
    const std::size_t step = 1 + rng.uniform_int(sched.steps);
    EXPECT_EQ(step, r.sampled_steps[b]);
    auto l = item_loss(batch[b], ref, sched, step, rng);
    loss += l.total.item() / 3;
    diff::backward(l.total);
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto& t = ref.registry().entries()[p].tensor;
      g[p].resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) g[p][i] += t.has_grad() ? t.grad()[i] / 3 : 0.0;
      t.zero_grad();
    }
  }
  EXPECT_NEAR(r.loss, loss, 1e-12 * std::abs(loss));
  Adam oracle(ref.registry(), {1e-3});
  oracle.step(ref.registry(), g);
  const auto a = flatten(w), b = flatten(ref);
  EXPECT_LE(testutil::max_abs_diff(a, b), 1e-12);
}

TEST(Train, GradientClipBoundsTheUpdateInput) {
  const auto batch = batch_of(2, 8);
  const auto sched = schedule_new(10, 0.03, 1.0);
  ModelWeights w = ModelWeights::random(tiny_config(), 9);
  Adam adam(w.registry(), {});
  const auto r = train_step(batch, w, sched, adam, 1, {1e-6, 1});
  EXPECT_GT(r.grad_norm, 1e-6);  // reported before clipping
}

TEST(Train, NonFiniteInputNamesTheItem) {
  auto batch = batch_of(3, 10);
  for (auto& p : batch[2].ligand_pos) p = {1e200, 1e200, 1e200};
  const auto sched = schedule_new(10, 0.03, 1.0);
  ModelWeights w = ModelWeights::random(tiny_config(), 11);
  Adam adam(w.registry(), {});
  try {
    train_step(batch, w, sched, adam, 5);
    FAIL() << "non-finite loss accepted";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch item 2"), std::string::npos) << e.what();
  }
}

TEST(Train, ItemLossRejectsOutOfRangeStep) {
  const auto batch = batch_of(1, 12);
  const ModelWeights w = ModelWeights::random(tiny_config(), 13);
  Rng rng(1);
  EXPECT_THROW(item_loss(batch[0], w, schedule_new(10, 0.03, 1.0), 0, rng), ConfigError);
  EXPECT_THROW(item_loss(batch[0], w, schedule_new(10, 0.03, 1.0), 11, rng), ConfigError);
}

TEST(Train, FullModelGradientsMatchFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  const auto rep = check::gradients(cfg, 21, 3);
  EXPECT_LE(rep.max_relative_error, 1e-4) << rep.worst_tensor;
  EXPECT_GT(rep.tensors, 20u);
}
