#include "mscod/bfn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mscod/errors.hpp"

namespace mscod {

using diff::Shape;
using diff::Tensor;

NoiseSchedule schedule_new(std::size_t steps, double sigma1_coord, double beta1_type) {
  if (steps < 1) throw ConfigError("schedule: step count must be >= 1");
  if (!(sigma1_coord > 0.0 && sigma1_coord < 1.0)) throw ConfigError("schedule: sigma1 must lie in (0, 1)");
  if (!(beta1_type > 0.0) || !std::isfinite(beta1_type)) throw ConfigError("schedule: beta1 must be positive");
  NoiseSchedule s;
  s.steps = steps;
  s.sigma1_coord = sigma1_coord;
  s.beta1_type = beta1_type;
  const double n = static_cast<double>(steps);
  const double decay = 1.0 - std::pow(sigma1_coord, 2.0 / n);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double fi = static_cast<double>(i);
    s.coord_accuracy.push_back(std::pow(sigma1_coord, -2.0 * fi / n) * decay);
    s.type_accuracy.push_back(beta1_type * (2.0 * fi - 1.0) / (n * n));
  }
  return s;
}

BeliefState prior_belief(std::size_t num_atoms, int num_types) {
  BeliefState b;
  b.mu.assign(num_atoms, Vec3{0.0, 0.0, 0.0});
  b.rho = 1.0;
  b.type_probs.assign(num_atoms, std::vector<double>(static_cast<std::size_t>(num_types),
                                                     1.0 / static_cast<double>(num_types)));
  return b;
}

namespace {

// Mean of the type sender for class k: alpha' (K e_k - 1).
double sender_mean(int k, int j, int num_types, double alpha_type) {
  return alpha_type * ((j == k ? static_cast<double>(num_types) : 0.0) - 1.0);
}

std::vector<double> draw_type_sender(int k, int num_types, double alpha_type, Rng& rng) {
  const double sd = std::sqrt(alpha_type * static_cast<double>(num_types));
  std::vector<double> y(static_cast<std::size_t>(num_types));
  for (int j = 0; j < num_types; ++j) y[static_cast<std::size_t>(j)] = sender_mean(k, j, num_types, alpha_type) + sd * rng.normal();
  return y;
}

std::vector<double> softmax_row(const std::vector<double>& y) {
  double peak = y[0];
  for (double v : y) peak = std::max(peak, v);
  std::vector<double> p(y.size());
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    p[j] = std::exp(y[j] - peak);
    total += p[j];
  }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

SenderSample sample_sender(const std::vector<Vec3>& x, const std::vector<int>& types, int num_types,
                           double alpha, double alpha_type, Rng& rng) {
  SenderSample s;
  const double sd = 1.0 / std::sqrt(alpha);
  for (const auto& p : x) s.coords.push_back({p[0] + sd * rng.normal(), p[1] + sd * rng.normal(), p[2] + sd * rng.normal()});
  for (int k : types) s.types.push_back(draw_type_sender(k, num_types, alpha_type, rng));
  return s;
}

BeliefState flow_state(const std::vector<Vec3>& x, const std::vector<int>& types, int num_types,
                       const NoiseSchedule& sched, double t, Rng& rng) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("flow_state: t must lie in [0, 1]");
  BeliefState b;
  b.t = t;
  b.step = static_cast<std::size_t>(std::llround(t * static_cast<double>(sched.steps)));
  const double gamma = 1.0 - std::pow(sched.sigma1_coord, 2.0 * t);
  const double sd = std::sqrt(gamma * (1.0 - gamma));
  for (const auto& p : x) {
    Vec3 m;
    for (int a = 0; a < 3; ++a) m[static_cast<std::size_t>(a)] = gamma * p[static_cast<std::size_t>(a)] + sd * rng.normal();
    b.mu.push_back(m);
  }
  b.rho = 1.0 / (1.0 - gamma);
  const double beta = sched.beta1_type * t * t;
  for (int k : types) {
    // beta = 0 gives y = 0 exactly and a uniform row.
    b.type_probs.push_back(softmax_row(draw_type_sender(k, num_types, beta, rng)));
  }
  return b;
}

CoordUpdate bayes_update_coords(const std::vector<Vec3>& mu, double rho, const std::vector<Vec3>& y,
                                double alpha) {
  if (mu.size() != y.size()) throw DimensionError("bayes_update_coords: atom counts differ");
  CoordUpdate u;
  u.rho = rho + alpha;
  u.mu.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) u.mu[i][a] = (rho * mu[i][a] + alpha * y[i][a]) / u.rho;
  return u;
}

std::vector<std::vector<double>> bayes_update_types(const std::vector<std::vector<double>>& probs,
                                                    const std::vector<std::vector<double>>& y) {
  if (probs.size() != y.size()) throw DimensionError("bayes_update_types: atom counts differ");
  std::vector<std::vector<double>> out(probs.size());
  for (std::size_t d = 0; d < probs.size(); ++d) {
    if (probs[d].size() != y[d].size()) throw DimensionError("bayes_update_types: class counts differ");
    // theta_k e^{y_k - max y}, renormalised; the shift cannot change the result.
    double peak = y[d][0];
    for (double v : y[d]) peak = std::max(peak, v);
    std::vector<double> row(probs[d].size());
    double total = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      row[k] = probs[d][k] * std::exp(y[d][k] - peak);
      total += row[k];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("bayes_update_types: degenerate row");
    for (auto& v : row) v /= total;
    out[d] = std::move(row);
  }
  return out;
}

Tensor output_distribution(const Tensor& logits) { return diff::softmax(logits, 1); }

Tensor loss_coords(const std::vector<Vec3>& x, const Tensor& x_hat, double alpha) {
  if (x_hat.rank() != 2 || x_hat.dim(0) != x.size() || x_hat.dim(1) != 3)
    throw DimensionError("loss_coords: prediction " + diff::shape_str(x_hat.shape()) +
                         " does not match " + std::to_string(x.size()) + " atoms");
  std::vector<double> flat;
  flat.reserve(x.size() * 3);
  for (const auto& p : x) flat.insert(flat.end(), p.begin(), p.end());
  Tensor truth(Shape{x.size(), 3}, std::move(flat));
  return diff::scale(diff::sum(diff::square(diff::sub(truth, x_hat))), 0.5 * alpha);
}

Tensor loss_types_at(const std::vector<int>& types, const Tensor& logits, double alpha_type,
                     const std::vector<std::vector<double>>& y) {
  const std::size_t n = types.size();
  if (logits.rank() != 2 || logits.dim(0) != n || y.size() != n)
    throw DimensionError("loss_types: logits " + diff::shape_str(logits.shape()) + " do not match " +
                         std::to_string(n) + " atoms");
  const int kt = static_cast<int>(logits.dim(1));
  const double var = alpha_type * static_cast<double>(kt);
  const double log_norm = -0.5 * static_cast<double>(kt) * std::log(2.0 * std::numbers::pi * var);
  auto log_density = [&](const std::vector<double>& yd, int k) {
    double sq = 0.0;
    for (int j = 0; j < kt; ++j) {
      const double r = yd[static_cast<std::size_t>(j)] - sender_mean(k, j, kt, alpha_type);
      sq += r * r;
    }
    return log_norm - sq / (2.0 * var);
  };
  double sender_total = 0.0;
  std::vector<double> components(n * static_cast<std::size_t>(kt));
  for (std::size_t d = 0; d < n; ++d) {
    sender_total += log_density(y[d], types[d]);
    for (int k = 0; k < kt; ++k) components[d * static_cast<std::size_t>(kt) + static_cast<std::size_t>(k)] = log_density(y[d], k);
  }
  Tensor mixture = diff::logsumexp(
      diff::add(diff::log_softmax(logits, 1), Tensor(Shape{n, static_cast<std::size_t>(kt)}, std::move(components))), 1);
  return diff::add_scalar(diff::scale(diff::sum(mixture), -1.0), sender_total);
}

Tensor loss_types(const std::vector<int>& types, const Tensor& logits, double alpha_type, Rng& rng) {
  const int kt = static_cast<int>(logits.dim(1));
  std::vector<std::vector<double>> y;
  for (int k : types) y.push_back(draw_type_sender(k, kt, alpha_type, rng));
  return loss_types_at(types, logits, alpha_type, y);
}

Tensor loss_total(const Tensor& coords_term, const Tensor& types_term) {
  return diff::add(coords_term, types_term);
}

namespace {

std::vector<Vec3> tensor_rows3(const Tensor& t) {
  std::vector<Vec3> out(t.dim(0));
  auto v = t.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

}  // namespace

SampledMolecule sample(const Complex& pocket, std::size_t num_atoms, const ModelWeights& weights,
                       const NoiseSchedule& sched, std::uint64_t seed, const SampleOptions& options) {
  if (num_atoms < 1) throw ConfigError("sample: N_M must be ≥ 1");
  const int kt = weights.config().ligand_types;
  diff::NoGradGuard no_grad;
  Rng rng(seed);
  BeliefState belief = prior_belief(num_atoms, kt);
  SampledMolecule out;
  out.seed = seed;

  for (std::size_t i = 1; i <= sched.steps; ++i) {
    try {
      belief.t = static_cast<double>(i - 1) / static_cast<double>(sched.steps);
      BackboneOutput net = backbone_forward(pocket, belief.as_input(), weights);
      Tensor probs = output_distribution(net.logits);
      const double alpha = sched.alpha(i);
      const double alpha_type = sched.alpha_type(i);

      // Receiver draw: coordinates around the prediction, types from a
      // class sampled out of p_O.
      const std::vector<Vec3> x_hat = tensor_rows3(net.coords);
      const double sd = 1.0 / std::sqrt(alpha);
      std::vector<Vec3> y_x(num_atoms);
      for (std::size_t d = 0; d < num_atoms; ++d) {
        Vec3 noise{rng.normal(), rng.normal(), rng.normal()};
        if (options.noise_frame) {
          const Mat3& r = *options.noise_frame;
          noise = {r[0][0] * noise[0] + r[0][1] * noise[1] + r[0][2] * noise[2],
                   r[1][0] * noise[0] + r[1][1] * noise[1] + r[1][2] * noise[2],
                   r[2][0] * noise[0] + r[2][1] * noise[1] + r[2][2] * noise[2]};
        }
        for (std::size_t a = 0; a < 3; ++a) y_x[d][a] = x_hat[d][a] + sd * noise[a];
      }
      std::vector<std::vector<double>> y_v(num_atoms);
      auto pv = probs.values();
      for (std::size_t d = 0; d < num_atoms; ++d) {
        const double u = rng.uniform();
        int k = kt - 1;
        double acc = 0.0;
        for (int c = 0; c < kt; ++c) {
          acc += pv[d * static_cast<std::size_t>(kt) + static_cast<std::size_t>(c)];
          if (u < acc) {
            k = c;
            break;
          }
        }
        y_v[d] = draw_type_sender(k, kt, alpha_type, rng);
      }

      SampleTraceRow row{i, belief.t, 0.0, std::numeric_limits<double>::quiet_NaN()};
      if (options.reference) row.coord_loss = loss_coords(*options.reference, net.coords, alpha).item();

      CoordUpdate cu = bayes_update_coords(belief.mu, belief.rho, y_x, alpha);
      belief.mu = std::move(cu.mu);
      belief.rho = cu.rho;
      belief.type_probs = bayes_update_types(belief.type_probs, y_v);
      belief.step = i;
      row.rho = belief.rho;
      out.trace.push_back(row);
    } catch (const NumericError& e) {
      throw NumericError("sampling step " + std::to_string(i) + ": " + e.what());
    }
  }

  belief.t = 1.0;
  BackboneOutput final_net = backbone_forward(pocket, belief.as_input(), weights);
  Tensor probs = output_distribution(final_net.logits);
  out.coords = tensor_rows3(final_net.coords);
  out.final_rho = belief.rho;
  auto pv = probs.values();
  for (std::size_t d = 0; d < num_atoms; ++d) {
    std::vector<double> row(pv.begin() + static_cast<std::ptrdiff_t>(d * static_cast<std::size_t>(kt)),
                            pv.begin() + static_cast<std::ptrdiff_t>((d + 1) * static_cast<std::size_t>(kt)));
    int best = 0;
    for (int c = 1; c < kt; ++c)
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
    out.types.push_back(best);
    out.type_probs.push_back(std::move(row));
  }
  return out;
}

}  // namespace mscod
