#include "mscod/train.hpp"

#include <cmath>
#include <exception>
#include <thread>

#include "mscod/errors.hpp"

namespace mscod {

Adam::Adam(const nn::ParamRegistry& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0);
    v_.emplace_back(e.tensor.size(), 0.0);
  }
}

void Adam::step(nn::ParamRegistry& params, const std::vector<std::vector<double>>& grads) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || m_.size() != entries.size())
    throw DimensionError("adam: gradient list does not match parameter registry");
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto values = entries[p].tensor.mutable_values();
    const auto& g = grads[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / c1;
      const double vhat = v_[p][i] / c2;
      values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

ItemLoss item_loss(const Complex& c, const ModelWeights& weights, const NoiseSchedule& sched,
                   std::size_t step, Rng& rng) {
  if (step < 1 || step > sched.steps) throw ConfigError("item_loss: step outside 1..n");
  const double t = static_cast<double>(step - 1) / static_cast<double>(sched.steps);
  BeliefState belief = flow_state(c.ligand_pos, c.ligand_type, c.ligand_types, sched, t, rng);
  BackboneOutput net = backbone_forward(c, belief.as_input(), weights);
  ItemLoss out;
  out.coords = loss_coords(c.ligand_pos, net.coords, sched.alpha(step));
  out.types = loss_types(c.ligand_type, net.logits, sched.alpha_type(step), rng);
  out.total = loss_total(out.coords, out.types);
  return out;
}

namespace {

struct ItemResult {
  double total = 0.0, coords = 0.0, types = 0.0;
  std::size_t step = 0;
  std::vector<std::vector<double>> grads;
  std::exception_ptr error;
};

void run_item(const Complex& c, ModelWeights& w, const NoiseSchedule& sched, std::uint64_t seed,
              std::size_t index, ItemResult& out) {
  try {
    Rng rng(derive_seed(seed, "item", index));
    out.step = 1 + static_cast<std::size_t>(rng.uniform_int(sched.steps));
    auto& entries = w.registry().entries();
    for (auto& e : entries) e.tensor.zero_grad();
    ItemLoss loss = item_loss(c, w, sched, out.step, rng);
    out.total = loss.total.item();
    out.coords = loss.coords.item();
    out.types = loss.types.item();
    diff::backward(loss.total);
    out.grads.resize(entries.size());
    for (std::size_t p = 0; p < entries.size(); ++p) {
      const auto g = entries[p].tensor.grad();
      out.grads[p] = g.empty() ? std::vector<double>(entries[p].tensor.size(), 0.0)
                               : std::vector<double>(g.begin(), g.end());
      entries[p].tensor.zero_grad();
    }
  } catch (...) {
    out.error = std::current_exception();
  }
}

}  // namespace

TrainStepResult train_step(std::span<const Complex> batch, ModelWeights& weights,
                           const NoiseSchedule& sched, Adam& optimizer, std::uint64_t seed,
                           const TrainStepOptions& options) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<ItemResult> items(batch.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, batch.size()));
  if (threads == 1) {
    for (std::size_t b = 0; b < batch.size(); ++b) run_item(batch[b], weights, sched, seed, b, items[b]);
  } else {
    std::vector<ModelWeights> copies;
    for (std::size_t k = 0; k < threads; ++k) copies.push_back(weights.clone());
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        for (std::size_t b = k; b < batch.size(); b += threads)
          run_item(batch[b], copies[k], sched, seed, b, items[b]);
      });
    }
    for (auto& th : pool) th.join();
  }

  TrainStepResult result;
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (items[b].error) {
      try {
        std::rethrow_exception(items[b].error);
      } catch (const NumericError& e) {
        throw NumericError("batch item " + std::to_string(b) + ": " + e.what());
      }
    }
    if (!std::isfinite(items[b].total))
      throw NumericError("batch item " + std::to_string(b) + ": non-finite loss");
    result.loss += items[b].total;
    result.coord_loss += items[b].coords;
    result.type_loss += items[b].types;
    result.sampled_steps.push_back(items[b].step);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  result.loss *= inv;
  result.coord_loss *= inv;
  result.type_loss *= inv;

  // Index-ordered reduction keeps the sum independent of scheduling.
  std::vector<std::vector<double>> grads = std::move(items[0].grads);
  for (std::size_t b = 1; b < items.size(); ++b)
    for (std::size_t p = 0; p < grads.size(); ++p)
      for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += items[b].grads[p][i];
  double sq = 0.0;
  for (auto& g : grads) {
    for (auto& v : g) {
      v *= inv;
      sq += v * v;
    }
  }
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.grad_norm)) throw NumericError("non-finite gradient norm");
  if (options.grad_clip > 0.0 && result.grad_norm > options.grad_clip) {
    const double f = options.grad_clip / result.grad_norm;
    for (auto& g : grads)
      for (auto& v : g) v *= f;
  }
  optimizer.step(weights.registry(), grads);
  return result;
}

}  // namespace mscod
