#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mscod/bfn.hpp"
#include "mscod/check.hpp"
#include "mscod/errors.hpp"
#include "test_util.hpp"

using namespace mscod;
using diff::Tensor;

namespace {

double log_normal(double y, double mean, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - (y - mean) * (y - mean) / (2 * var);
}

// Independent evaluation of the type KL estimate from Gaussian log-densities.
double type_loss_oracle(const std::vector<int>& types, const std::vector<std::vector<double>>& probs, double a,
                        const std::vector<std::vector<double>>& y) {
  const int kt = static_cast<int>(probs[0].size());
  double total = 0;
  for (std::size_t d = 0; d < types.size(); ++d) {
    auto log_lik = [&](int cls) {
      double s = 0;
      for (int j = 0; j < kt; ++j) s += log_normal(y[d][j], a * ((j == cls ? kt : 0) - 1.0), a * kt);
      return s;
    };
    const double sender = log_lik(types[d]);
    double peak = -1e300;
    std::vector<double> terms(kt);
    for (int k = 0; k < kt; ++k) peak = std::max(peak, terms[k] = std::log(probs[d][k]) + log_lik(k));
    double acc = 0;
    for (double t : terms) acc += std::exp(t - peak);
    total += sender - (peak + std::log(acc));
  }
  return total;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  return cfg;
}

ModelWeights jittered_weights(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w = ModelWeights::random(cfg, seed);
  Rng rng(seed + 1);
  for (auto& e : w.registry().entries())
    for (auto& v : e.tensor.mutable_values()) v += 0.05 * rng.normal();
  return w;
}

}  // namespace

TEST(Bfn, ScheduleTelescopes) {
  for (std::size_t n : {1, 10, 100, 1000}) {
    const auto s = schedule_new(n, 0.03, 1.0);
    ASSERT_EQ(s.coord_accuracy.size(), n);
    double sa = 1.0, st = 0.0;
    for (std::size_t i = 1; i <= n; ++i) sa += s.alpha(i), st += s.alpha_type(i);
    const double target = 1.0 / (0.03 * 0.03);
    EXPECT_LE(std::abs(sa - target) / target, 1e-9) << n;
    EXPECT_LE(std::abs(st - 1.0), 1e-12) << n;
  }
  const auto rep = check::schedule_telescoping({1, 10, 100}, 0.03, 1.0, tiny_config(), 5);
  EXPECT_LE(rep.sampled_rho_rel_err, 1e-6);
}

TEST(Bfn, ScheduleRejectsBadParameters) {
  EXPECT_THROW(schedule_new(0, 0.03, 1.0), ConfigError);
  EXPECT_THROW(schedule_new(10, 1.5, 1.0), ConfigError);
  EXPECT_THROW(schedule_new(10, 0.03, 0.0), ConfigError);
}

TEST(Bfn, PriorIsUninformed) {
  const auto b = prior_belief(3, 4);
  EXPECT_EQ(b.rho, 1.0);
  for (const auto& row : b.type_probs)
    for (double p : row) EXPECT_EQ(p, 0.25);
  for (const auto& m : b.mu) EXPECT_EQ(m, (Vec3{0, 0, 0}));
}

TEST(Bfn, CoordinateUpdatesComposeAdditively) {
  // Two updates at the same observation equal one update with summed precision.
  const std::vector<Vec3> mu{{1, 2, 3}}, y{{-1, 0.5, 2}};
  const auto a = bayes_update_coords(bayes_update_coords(mu, 2.0, y, 3.0).mu, 5.0, y, 4.0);
  const auto b = bayes_update_coords(mu, 2.0, y, 7.0);
  EXPECT_DOUBLE_EQ(a.rho, 9.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.mu[0][i], b.mu[0][i], 1e-14);
  EXPECT_THROW(bayes_update_coords(mu, 1.0, {}, 1.0), DimensionError);
}

TEST(Bfn, TypeUpdateMatchesUnshiftedFormulaAndStaysOnSimplex) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> p(2, std::vector<double>(5)), y(2, std::vector<double>(5));
    for (int d = 0; d < 2; ++d) {
      double s = 0;
      for (auto& v : p[d]) s += (v = rng.uniform(0.01, 1));
      for (auto& v : p[d]) v /= s;
      for (auto& v : y[d]) v = 3 * rng.normal();
    }
    const auto out = bayes_update_types(p, y);
    for (int d = 0; d < 2; ++d) {
      double z = 0, total = 0;
      for (int k = 0; k < 5; ++k) z += p[d][k] * std::exp(y[d][k]);
      for (int k = 0; k < 5; ++k) {
        EXPECT_NEAR(out[d][k], p[d][k] * std::exp(y[d][k]) / z, 1e-13);
        EXPECT_GE(out[d][k], 0.0);
        total += out[d][k];
      }
      EXPECT_NEAR(total, 1.0, 1e-14);
    }
  }
}

TEST(Bfn, FlowStateMatchesSequentialBayesUpdates) {
  // Monte Carlo oracle: run the actual sender/update chain for i-1 steps and
  // compare the moments of mu with the closed-form flow state at t=(i-1)/n.
  const auto sched = schedule_new(20, 0.1, 2.0);
  const std::vector<Vec3> x{{1.5, -0.5, 2.0}};
  const std::vector<int> types{2};
  const std::size_t i = 13, trials = 20000;
  const double t = double(i - 1) / 20;
  Rng rng(4);
  double sm = 0, sm2 = 0, fm = 0, fm2 = 0, sp = 0, fp = 0;
  for (std::size_t r = 0; r < trials; ++r) {
    BeliefState b = prior_belief(1, 4);
    for (std::size_t j = 1; j < i; ++j) {
      const auto y = sample_sender(x, types, 4, sched.alpha(j), sched.alpha_type(j), rng);
      const auto u = bayes_update_coords(b.mu, b.rho, y.coords, sched.alpha(j));
      b.mu = u.mu;
      b.rho = u.rho;
      b.type_probs = bayes_update_types(b.type_probs, y.types);
    }
    const BeliefState f = flow_state(x, types, 4, sched, t, rng);
    if (r == 0) EXPECT_NEAR(b.rho, f.rho, 1e-9 * f.rho);
    sm += b.mu[0][0], sm2 += b.mu[0][0] * b.mu[0][0];
    fm += f.mu[0][0], fm2 += f.mu[0][0] * f.mu[0][0];
    sp += b.type_probs[0][2], fp += f.type_probs[0][2];
  }
  const double n = trials;
  const double gamma = 1 - std::pow(0.1, 2 * t);
  const double var = gamma * (1 - gamma);
  EXPECT_NEAR(sm / n, gamma * 1.5, 5 * std::sqrt(var / n));
  EXPECT_NEAR(fm / n, gamma * 1.5, 5 * std::sqrt(var / n));
  EXPECT_NEAR(sm2 / n - (sm / n) * (sm / n), var, 0.05 * var);
  EXPECT_NEAR(fm2 / n - (fm / n) * (fm / n), var, 0.05 * var);
  EXPECT_NEAR(sp / n, fp / n, 0.01);
}

TEST(Bfn, FlowStateAtZeroIsThePrior) {
  Rng rng(5);
  const auto sched = schedule_new(10, 0.03, 1.0);
  const auto b = flow_state({{1, 2, 3}}, {1}, 3, sched, 0.0, rng);
  EXPECT_EQ(b.mu[0], (Vec3{0, 0, 0}));
  EXPECT_EQ(b.rho, 1.0);
  for (double p : b.type_probs[0]) EXPECT_DOUBLE_EQ(p, 1.0 / 3);
  EXPECT_THROW(flow_state({{1, 2, 3}}, {1}, 3, sched, 1.5, rng), ConfigError);
}

TEST(Bfn, CoordinateLossClosedForm) {
  const Tensor xh = Tensor::from_rows({{1, 0, 0}, {0, 2, 0}});
  const Tensor l = loss_coords({{0, 0, 0}, {0, 0, 0}}, xh, 4.0);
  EXPECT_DOUBLE_EQ(l.item(), 0.5 * 4.0 * (1 + 4));
  EXPECT_THROW(loss_coords({{0, 0, 0}}, xh, 1.0), DimensionError);
}

TEST(Bfn, TypeLossMatchesDensityOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<int> types{int(rng.uniform_int(4)), int(rng.uniform_int(4))};
    const Tensor logits = testutil::random_tensor({2, 4}, rng, 2.0);
    const double a = rng.uniform(0.01, 0.5);
    std::vector<std::vector<double>> y(2, std::vector<double>(4));
    for (int d = 0; d < 2; ++d)
      for (int j = 0; j < 4; ++j) y[d][j] = a * ((j == types[d] ? 4 : 0) - 1.0) + std::sqrt(4 * a) * rng.normal();
    const Tensor probs = output_distribution(logits);
    std::vector<std::vector<double>> p(2, std::vector<double>(4));
    for (int d = 0; d < 2; ++d)
      for (int k = 0; k < 4; ++k) p[d][k] = probs.at(d, k);
    const double expect = type_loss_oracle(types, p, a, y);
    EXPECT_NEAR(loss_types_at(types, logits, a, y).item(), expect, 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Bfn, LossesMatchMonteCarloOracles) {
  const auto rep = check::loss_oracles(3, 20000, 7);
  EXPECT_TRUE(rep.passed) << "coord rel err " << rep.max_coord_mc_rel_err << " one-hot mean " << rep.onehot_mean
                          << " sigma " << rep.onehot_sigma << " min z " << rep.min_other_z;
  EXPECT_LE(rep.max_coord_mc_rel_err, 0.02);
}

TEST(Bfn, TypeLossGradient) {
  Rng rng(8);
  Tensor logits = testutil::random_tensor({3, 5}, rng, 1.0, true);
  const std::vector<int> types{0, 3, 4};
  std::vector<std::vector<double>> y(3, std::vector<double>(5));
  for (auto& row : y)
    for (auto& v : row) v = rng.normal();
  const auto rep = diff::finite_difference_check([&] { return loss_types_at(types, logits, 0.2, y); },
                                                 {{"logits", logits}});
  EXPECT_LE(rep[0].relative_error, 1e-7);
}

TEST(Bfn, SamplerIsDeterministicAndReachesTerminalPrecision) {
  const ModelConfig cfg = tiny_config();
  const ModelWeights w = jittered_weights(cfg, 9);
  Rng rng(10);
  const Complex pocket = check::random_complex(rng, 10, 3, cfg.protein_types, cfg.ligand_types);
  const auto sched = schedule_new(30, 0.03, 1.0);
  SampleOptions opt;
  opt.reference = &pocket.ligand_pos;
  const auto a = sample(pocket, 3, w, sched, 77, opt);
  const auto b = sample(pocket, 3, w, sched, 77, opt);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_EQ(a.types, b.types);
  ASSERT_EQ(a.trace.size(), 30u);
  EXPECT_TRUE(std::isfinite(a.trace.back().coord_loss));
  EXPECT_LE(std::abs(a.final_rho - 1.0 / (0.03 * 0.03)) / (1.0 / (0.03 * 0.03)), 1e-6);
  for (int k : a.types) {
    EXPECT_GE(k, 0);
    EXPECT_LT(k, cfg.ligand_types);
  }
  const auto c = sample(pocket, 3, w, sched, 78, opt);
  EXPECT_NE(a.coords, c.coords);
}

TEST(Bfn, SamplerRejectsEmptyLigand) {
  const ModelConfig cfg = tiny_config();
  const ModelWeights w = ModelWeights::random(cfg, 1);
  Rng rng(11);
  const Complex pocket = check::random_complex(rng, 5, 1, cfg.protein_types, cfg.ligand_types);
  try {
    sample(pocket, 0, w, schedule_new(5, 0.03, 1.0), 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("N_M must be ≥ 1"), std::string::npos);
  }
}

TEST(Bfn, SamplingIsRotationEquivariantWithMatchedNoiseFrame) {
  const ModelConfig cfg = tiny_config();
  const ModelWeights w = jittered_weights(cfg, 12);
  Rng rng(13);
  const Complex pocket = check::random_complex(rng, 12, 3, cfg.protein_types, cfg.ligand_types);
  const auto r = check::random_rotation(rng);
  Complex turned = pocket;
  for (auto& p : turned.protein_pos) {
    const Vec3 q = p;
    for (int a = 0; a < 3; ++a) p[a] = r[a][0] * q[0] + r[a][1] * q[1] + r[a][2] * q[2];
  }
  const auto sched = schedule_new(20, 0.03, 1.0);
  const auto base = sample(pocket, 3, w, sched, 5);
  SampleOptions opt;
  opt.noise_frame = Mat3{r[0], r[1], r[2]};
  const auto moved = sample(turned, 3, w, sched, 5, opt);
  for (std::size_t i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a) {
      const Vec3& q = base.coords[i];
      EXPECT_NEAR(moved.coords[i][a], r[a][0] * q[0] + r[a][1] * q[1] + r[a][2] * q[2], 1e-6);
    }
  EXPECT_EQ(moved.types, base.types);
}
