#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mscod/bfn.hpp"
#include "mscod/equivariant_net.hpp"

namespace mscod {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer state, one moment pair per registered tensor.
class Adam {
 public:
  Adam() = default;
  Adam(const nn::ParamRegistry& params, AdamConfig cfg);

  // Applies one update from the supplied gradients (same order as registry).
  void step(nn::ParamRegistry& params, const std::vector<std::vector<double>>& grads);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  std::vector<std::vector<double>>& first_moment() { return m_; }
  std::vector<std::vector<double>>& second_moment() { return v_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct TrainStepOptions {
  double grad_clip = 10.0;  // global gradient-norm ceiling; <= 0 disables
  std::size_t threads = 1;
};

struct TrainStepResult {
  double loss = 0.0;  // batch mean of L_total
  double coord_loss = 0.0;
  double type_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  std::vector<std::size_t> sampled_steps;
};

// Loss of one complex at step i of the schedule (flow state at t = (i-1)/n).
// Used by train_step and by the gradient checks.
struct ItemLoss {
  diff::Tensor total;
  diff::Tensor coords;
  diff::Tensor types;
};
ItemLoss item_loss(const Complex& centred, const ModelWeights& weights, const NoiseSchedule& sched,
                   std::size_t step, Rng& rng);

// One optimizer step on a batch of centred complexes. Per-item randomness is
// derived from (seed, item index) only, and per-item gradients are reduced
// in index order, so the result does not depend on `threads`. Throws
// NumericError on a non-finite loss or gradient.
TrainStepResult train_step(std::span<const Complex> batch, ModelWeights& weights,
                           const NoiseSchedule& sched, Adam& optimizer, std::uint64_t seed,
                           const TrainStepOptions& options = {});

}  // namespace mscod
