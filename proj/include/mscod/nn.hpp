#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mscod/gradcheck.hpp"
#include "mscod/rng.hpp"
#include "mscod/tensor.hpp"

namespace mscod::nn {

using diff::Shape;
using diff::Tensor;

enum class Init { kGlorot, kZeros, kOnes };

// Creates (or looks up) a named parameter. Model structs are built through a
// factory so that random init, checkpoint loading and per-thread copies all
// share one construction path and one parameter ordering.
using ParamFactory = std::function<Tensor(const std::string& path, Shape shape, Init init)>;

// Ordered registry of every trainable tensor, addressable by path.
class ParamRegistry {
 public:
  Tensor add(std::string path, Tensor t);
  const std::vector<diff::NamedTensor>& entries() const { return entries_; }
  std::vector<diff::NamedTensor>& entries() { return entries_; }
  const Tensor* find(const std::string& path) const;
  std::size_t scalar_count() const;

 private:
  std::vector<diff::NamedTensor> entries_;
};

// Glorot-uniform weights and zero biases drawn from `seed` in registration order.
ParamFactory random_factory(ParamRegistry& registry, std::uint64_t seed);
// Copies values from `source` by path; throws if a path is missing or the
// shape differs.
ParamFactory copy_factory(ParamRegistry& registry, const ParamRegistry& source);

// y = x W^T + b, W stored [out, in].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when built without bias

  static Linear make(const ParamFactory& f, const std::string& path, std::size_t in,
                     std::size_t out, bool with_bias = true, Init weight_init = Init::kGlorot);
  Tensor operator()(const Tensor& x) const { return diff::linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  static LayerNorm make(const ParamFactory& f, const std::string& path, std::size_t d);
  Tensor operator()(const Tensor& x) const { return diff::layer_norm(x, gain, bias, eps); }
};

// Two-layer perceptron: affine -> ReLU -> affine.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp make(const ParamFactory& f, const std::string& path, std::size_t in,
                  std::size_t hidden, std::size_t out, Init out_init = Init::kGlorot);
  Tensor operator()(const Tensor& x) const { return second(diff::relu(first(x))); }
};

}  // namespace mscod::nn
