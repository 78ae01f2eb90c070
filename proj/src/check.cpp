#include "mscod/check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "mscod/bfn.hpp"
#include "mscod/errors.hpp"
#include "mscod/gradcheck.hpp"
#include "mscod/train.hpp"

namespace mscod::check {

using diff::Shape;
using diff::Tensor;

Mat3 random_rotation(Rng& rng) {
  for (;;) {
    Mat3 a{};
    for (auto& row : a)
      for (auto& v : row) v = rng.normal();
    // Gram-Schmidt on the columns.
    Mat3 q{};
    bool ok = true;
    for (int c = 0; c < 3 && ok; ++c) {
      Vec3 v{a[0][c], a[1][c], a[2][c]};
      for (int p = 0; p < c; ++p) {
        const double dot = v[0] * q[0][p] + v[1] * q[1][p] + v[2] * q[2][p];
        for (int r = 0; r < 3; ++r) v[r] -= dot * q[r][p];
      }
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      if (n < 1e-6) ok = false;
      for (int r = 0; r < 3 && ok; ++r) q[r][c] = v[r] / n;
    }
    if (!ok) continue;
    const double det = q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) -
                       q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0]) +
                       q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
    if (det < 0)
      for (int r = 0; r < 3; ++r) q[r][2] = -q[r][2];
    return q;
  }
}

Complex random_complex(Rng& rng, std::size_t np, std::size_t nm, int protein_types, int ligand_types) {
  Complex c;
  c.name = "random";
  c.protein_types = protein_types;
  c.ligand_types = ligand_types;
  for (std::size_t i = 0; i < np; ++i) {
    c.protein_pos.push_back({rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3)});
    c.protein_type.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(protein_types))));
  }
  for (std::size_t i = 0; i < nm; ++i) {
    c.ligand_pos.push_back({rng.normal(0, 1.5), rng.normal(0, 1.5), rng.normal(0, 1.5)});
    c.ligand_type.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ligand_types))));
  }
  return center_by_protein_com(c);
}

namespace {

Vec3 transform(const Mat3& r, const Vec3& v, const Vec3& t) {
  Vec3 o{};
  for (int a = 0; a < 3; ++a) o[a] = r[a][0] * v[0] + r[a][1] * v[1] + r[a][2] * v[2] + t[a];
  return o;
}

// Perturbs every parameter so zero-initialised layers carry gradient too.
void jitter(ModelWeights& w, Rng& rng, double scale) {
  for (auto& e : w.registry().entries())
    for (auto& v : e.tensor.mutable_values()) v += scale * rng.normal();
}

BeliefInput random_belief(Rng& rng, std::size_t nm, int kt) {
  BeliefInput b;
  for (std::size_t i = 0; i < nm; ++i) {
    b.mu.push_back({rng.normal(0, 1.5), rng.normal(0, 1.5), rng.normal(0, 1.5)});
    std::vector<double> row(static_cast<std::size_t>(kt));
    double s = 0.0;
    for (auto& v : row) s += (v = rng.uniform(0.05, 1.0));
    for (auto& v : row) v /= s;
    b.type_probs.push_back(std::move(row));
  }
  b.t = rng.uniform();
  return b;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

EquivarianceReport equivariance(const ModelConfig& cfg, std::size_t complexes, std::size_t transforms,
                                std::uint64_t seed) {
  EquivarianceReport rep;
  Rng rng(derive_seed(seed, "check.equivariance"));
  ModelWeights w = ModelWeights::random(cfg, derive_seed(seed, "check.equivariance.init"));
  jitter(w, rng, 0.05);
  diff::NoGradGuard guard;
  for (std::size_t c = 0; c < complexes; ++c) {
    const std::size_t np = 8 + rng.uniform_int(16);
    const std::size_t nm = 2 + rng.uniform_int(6);
    const Complex pocket = random_complex(rng, np, nm, cfg.protein_types, cfg.ligand_types);
    const BeliefInput belief = random_belief(rng, nm, cfg.ligand_types);
    const BackboneOutput base = backbone_forward(pocket, belief, w);
    const auto bx = base.coords.values();
    for (std::size_t k = 0; k < transforms; ++k) {
      const Mat3 r = random_rotation(rng);
      const Vec3 t{rng.normal(0, 5), rng.normal(0, 5), rng.normal(0, 5)};
      Complex moved = pocket;
      for (auto& p : moved.protein_pos) p = transform(r, p, t);
      BeliefInput mb = belief;
      for (auto& p : mb.mu) p = transform(r, p, t);
      const BackboneOutput out = backbone_forward(moved, mb, w);
      const auto ox = out.coords.values();
      for (std::size_t i = 0; i < nm; ++i) {
        const Vec3 expect = transform(r, {bx[3 * i], bx[3 * i + 1], bx[3 * i + 2]}, t);
        for (int a = 0; a < 3; ++a)
          rep.max_coord_dev = std::max(rep.max_coord_dev, std::abs(ox[3 * i + a] - expect[a]));
      }
      rep.max_logit_dev = std::max(rep.max_logit_dev, max_abs_diff(out.logits.values(), base.logits.values()));
      rep.max_hidden_dev = std::max(rep.max_hidden_dev, max_abs_diff(out.hidden.values(), base.hidden.values()));
      ++rep.cases;
    }
  }
  return rep;
}

GradientReport gradients(const ModelConfig& cfg, std::uint64_t seed, std::size_t max_probes, double eps) {
  Rng rng(derive_seed(seed, "check.gradients"));
  const Complex c = random_complex(rng, 4, 2, cfg.protein_types, cfg.ligand_types);
  ModelWeights w = ModelWeights::random(cfg, derive_seed(seed, "check.gradients.init"));
  jitter(w, rng, 0.1);
  const NoiseSchedule sched = schedule_new(10, 0.03, 1.0);
  const std::uint64_t loss_seed = derive_seed(seed, "check.gradients.loss");
  auto loss = [&] {
    Rng r(loss_seed);
    return item_loss(c, w, sched, 6, r).total;
  };
  GradientReport rep;
  for (const auto& e : diff::finite_difference_check(loss, w.registry().entries(), eps, max_probes)) {
    ++rep.tensors;
    rep.probes += e.probed;
    if (e.relative_error >= rep.max_relative_error) {
      rep.max_relative_error = e.relative_error;
      rep.worst_tensor = e.name;
    }
  }
  return rep;
}

MhcaReport mhca_structure(std::size_t d, std::size_t heads, std::size_t trials, std::uint64_t seed) {
  MhcaReport rep;
  Rng rng(derive_seed(seed, "check.mhca"));
  diff::NoGradGuard guard;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    nn::ParamRegistry reg;
    const MhcaWeights w = MhcaWeights::make(nn::random_factory(reg, rng.next_u64()), "mhca", d, heads);
    const std::size_t np = 1 + rng.uniform_int(24), nl = 1 + rng.uniform_int(8);
    auto rand_mat = [&](std::size_t r, std::size_t cols) {
      std::vector<double> v(r * cols);
      for (auto& x : v) x = rng.normal();
      return Tensor(Shape{r, cols}, std::move(v));
    };
    const Tensor hp = rand_mat(np, d), hm = rand_mat(nl, d);
    for (std::size_t h = 0; h < heads; ++h) {
      const MhcaHeadTrace tr = mhca_head_trace(hp, hm, w, h);
      const auto a = tr.attention.values();
      for (std::size_t j = 0; j < nl; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < np; ++i) s += a[i * nl + j];
        rep.max_column_sum_dev = std::max(rep.max_column_sum_dev, std::abs(s - 1.0));
      }
      // Each context row is a convex combination of projected protein rows.
      const auto p = tr.projected_protein.values();
      const auto ctx = tr.context.values();
      const std::size_t dh = tr.projected_protein.dim(1);
      for (std::size_t col = 0; col < dh; ++col) {
        double lo = p[col], hi = p[col];
        for (std::size_t i = 1; i < np; ++i) lo = std::min(lo, p[i * dh + col]), hi = std::max(hi, p[i * dh + col]);
        const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
        for (std::size_t j = 0; j < nl; ++j) {
          const double v = ctx[j * dh + col];
          rep.max_context_excess = std::max(rep.max_context_excess, std::max(lo - v, v - hi) - slack);
        }
      }
    }
    const MhcaOutput before = mhca_forward(hp, hm, w);
    const MhcaOutput after = mhca_forward(hp, rand_mat(nl, d), w);
    const auto b = before.protein.values(), q = after.protein.values();
    if (!std::equal(b.begin(), b.end(), q.begin(), q.end())) rep.protein_unchanged = false;
    ++rep.trials;
  }
  return rep;
}

MsibReport msib_identity(std::size_t d, std::size_t trials, std::uint64_t seed) {
  MsibReport rep;
  Rng rng(derive_seed(seed, "check.msib"));
  diff::NoGradGuard guard;
  for (double r : kDefaultCompressionRatios) rep.widths_d128.push_back(bottleneck_width(r, 128));
  for (std::size_t trial = 0; trial < trials; ++trial) {
    nn::ParamRegistry reg;
    MsibWeights w = MsibWeights::make(nn::random_factory(reg, rng.next_u64()), "msib", d);
    for (auto& p : w.pathways) {
      for (auto& v : p.decoder.weight.mutable_values()) v = 0.0;
      for (auto& v : p.decoder.bias.mutable_values()) v = 0.0;
    }
    const std::size_t n = 1 + rng.uniform_int(32);
    std::vector<double> hv(n * d);
    for (auto& x : hv) x = rng.normal(0, 2);
    const Tensor h(Shape{n, d}, hv);
    const Tensor out = msib_fusion(h, w);
    const auto fused = out.values();
    if (!std::equal(fused.begin(), fused.end(), hv.begin(), hv.end())) rep.identity_exact = false;
    ++rep.trials;
  }
  return rep;
}

ScheduleReport schedule_telescoping(const std::vector<std::size_t>& step_counts, double sigma1, double beta1,
                                    const ModelConfig& cfg, std::uint64_t seed) {
  ScheduleReport rep;
  const double target = 1.0 / (sigma1 * sigma1);
  for (std::size_t n : step_counts) {
    const NoiseSchedule s = schedule_new(n, sigma1, beta1);
    double sa = 1.0, sb = 0.0;
    for (std::size_t i = 1; i <= n; ++i) sa += s.alpha(i), sb += s.alpha_type(i);
    rep.max_coord_rel_err = std::max(rep.max_coord_rel_err, std::abs(sa - target) / target);
    rep.max_type_abs_err = std::max(rep.max_type_abs_err, std::abs(sb - beta1));
  }
  Rng rng(derive_seed(seed, "check.schedule"));
  const Complex pocket = random_complex(rng, 12, 3, cfg.protein_types, cfg.ligand_types);
  const ModelWeights w = ModelWeights::random(cfg, derive_seed(seed, "check.schedule.init"));
  const SampledMolecule m = sample(pocket, 3, w, schedule_new(100, sigma1, beta1), rng.next_u64());
  rep.sampled_rho_rel_err = std::abs(m.final_rho - target) / target;
  return rep;
}

LossReport loss_oracles(std::size_t configs, std::size_t samples, std::uint64_t seed) {
  LossReport rep;
  Rng rng(derive_seed(seed, "check.loss"));
  const NoiseSchedule sched = schedule_new(100, 0.03, 1.0);
  diff::NoGradGuard guard;
  rep.min_other_z = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < configs; ++c) {
    // Coordinates: KL between N(x, I/alpha) and N(x_hat, I/alpha) by sampling.
    const std::size_t n = 2 + rng.uniform_int(5);
    const double alpha = sched.alpha(40 + rng.uniform_int(61));
    std::vector<Vec3> x(n);
    std::vector<double> xh(n * 3);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) {
        x[i][a] = rng.normal(0, 2);
        xh[i * 3 + a] = x[i][a] + rng.normal(0, 0.7);
      }
    const double closed = loss_coords(x, Tensor(Shape{n, 3}, xh), alpha).item();
    const double sd = 1.0 / std::sqrt(alpha);
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      double lr = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
          const double y = x[i][a] + sd * rng.normal();
          const double u = y - x[i][a], v = y - xh[i * 3 + a];
          lr += 0.5 * alpha * (v * v - u * u);
        }
      acc += lr;
    }
    const double mc = acc / static_cast<double>(samples);
    rep.max_coord_mc_rel_err = std::max(rep.max_coord_mc_rel_err, std::abs(mc - closed) / closed);

    // Types: the estimator averages to the KL, so it is 0 for a perfect
    // output and non-negative otherwise.
    const int kt = 6;
    const double at = sched.alpha_type(1 + rng.uniform_int(100));
    std::vector<int> types(n);
    for (auto& t : types) t = static_cast<int>(rng.uniform_int(kt));
    std::vector<double> onehot(n * kt, 0.0), other(n * kt);
    for (std::size_t i = 0; i < n; ++i) onehot[i * kt + static_cast<std::size_t>(types[i])] = 60.0;
    for (auto& v : other) v = rng.normal(0, 2);
    const std::size_t type_samples = std::max<std::size_t>(1000, samples / 10);
    auto moments = [&](const std::vector<double>& logits) {
      const Tensor lt(Shape{n, static_cast<std::size_t>(kt)}, logits);
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t s = 0; s < type_samples; ++s) {
        const double v = loss_types(types, lt, at, rng).item();
        s1 += v, s2 += v * v;
      }
      const double m = s1 / static_cast<double>(type_samples);
      const double var = std::max(0.0, s2 / static_cast<double>(type_samples) - m * m);
      return std::pair{m, std::sqrt(var / static_cast<double>(type_samples))};
    };
    const auto [m1, e1] = moments(onehot);
    if (std::abs(m1) - 3 * e1 > std::abs(rep.onehot_mean) - 3 * rep.onehot_sigma) rep.onehot_mean = m1, rep.onehot_sigma = e1;
    const auto [m2, e2] = moments(other);
    rep.min_other_z = std::min(rep.min_other_z, e2 > 0 ? m2 / e2 : (m2 >= 0 ? 0.0 : -1e9));
  }
  rep.passed = rep.max_coord_mc_rel_err <= 0.02 && std::abs(rep.onehot_mean) <= 3 * rep.onehot_sigma + 1e-9 &&
               rep.min_other_z >= -3.0;
  return rep;
}

std::vector<SuiteResult> run_all(Level level, const std::function<void(const std::string&)>& line) {
  const bool full = level == Level::kFull;
  const std::uint64_t seed = 20240601;
  ModelConfig small;
  small.hidden_dim = 16;
  small.heads = 4;
  small.layers = 2;
  ModelConfig tiny;
  tiny.hidden_dim = 8;
  tiny.heads = 2;
  tiny.layers = 2;

  std::vector<SuiteResult> results;
  auto run = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    SuiteResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto [ok, detail] = body();
      r.passed = ok;
      r.detail = detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (line) {
      char buf[512];
      std::snprintf(buf, sizeof buf, "[%s] %-14s %7.2fs  %s", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                    r.detail.c_str());
      line(buf);
    }
    results.push_back(r);
  };
  char buf[256];

  run("equivariance", [&] {
    const auto r = equivariance(small, full ? 20 : 3, full ? 20 : 3, seed);
    std::snprintf(buf, sizeof buf, "%zu cases, max dev coords %.2e logits %.2e hidden %.2e", r.cases,
                  r.max_coord_dev, r.max_logit_dev, r.max_hidden_dev);
    return std::pair{std::max({r.max_coord_dev, r.max_logit_dev, r.max_hidden_dev}) <= 1e-6, std::string(buf)};
  });
  run("gradients", [&] {
    const auto r = gradients(tiny, seed, full ? 0 : 4);
    std::snprintf(buf, sizeof buf, "%zu tensors, %zu probes, worst rel err %.2e (%s)", r.tensors, r.probes,
                  r.max_relative_error, r.worst_tensor.c_str());
    return std::pair{r.max_relative_error <= 1e-4, std::string(buf)};
  });
  run("mhca", [&] {
    const auto r = mhca_structure(16, 4, full ? 100 : 20, seed);
    std::snprintf(buf, sizeof buf, "%zu trials, column sum dev %.2e, hull excess %.2e, protein %s", r.trials,
                  r.max_column_sum_dev, r.max_context_excess, r.protein_unchanged ? "unchanged" : "CHANGED");
    return std::pair{r.max_column_sum_dev <= 1e-12 && r.protein_unchanged && r.max_context_excess <= 0.0,
                     std::string(buf)};
  });
  run("msib", [&] {
    const auto r = msib_identity(16, full ? 100 : 20, seed);
    const bool widths = r.widths_d128 == std::vector<std::size_t>{16, 32, 64};
    std::snprintf(buf, sizeof buf, "%zu trials, identity %s, d=128 widths %zu/%zu/%zu", r.trials,
                  r.identity_exact ? "exact" : "BROKEN", r.widths_d128[0], r.widths_d128[1], r.widths_d128[2]);
    return std::pair{r.identity_exact && widths, std::string(buf)};
  });
  run("schedule", [&] {
    const auto r = schedule_telescoping({1, 10, 100, 1000}, 0.03, 1.0, small, seed);
    std::snprintf(buf, sizeof buf, "coord rel err %.2e, type abs err %.2e, sampled rho rel err %.2e",
                  r.max_coord_rel_err, r.max_type_abs_err, r.sampled_rho_rel_err);
    return std::pair{r.max_coord_rel_err <= 1e-9 && r.max_type_abs_err <= 1e-12 && r.sampled_rho_rel_err <= 1e-6,
                     std::string(buf)};
  });
  run("losses", [&] {
    const auto r = loss_oracles(full ? 10 : 4, full ? 100000 : 10000, seed);
    std::snprintf(buf, sizeof buf, "coord KL vs MC rel err %.2e, one-hot type loss %.2e +- %.1e, min z %.2f",
                  r.max_coord_mc_rel_err, r.onehot_mean, r.onehot_sigma, r.min_other_z);
    return std::pair{r.passed, std::string(buf)};
  });
  return results;
}

}  // namespace mscod::check
