#include "mscod/nn.hpp"

#include <cmath>
#include <memory>

#include "mscod/errors.hpp"

namespace mscod::nn {

Tensor ParamRegistry::add(std::string path, Tensor t) {
  if (find(path)) throw ConfigError("duplicate parameter path '" + path + "'");
  t.set_requires_grad(true);
  entries_.push_back({std::move(path), t});
  return t;
}

const Tensor* ParamRegistry::find(const std::string& path) const {
  for (const auto& e : entries_) {
    if (e.name == path) return &e.tensor;
  }
  return nullptr;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

ParamFactory random_factory(ParamRegistry& registry, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [&registry, rng](const std::string& path, Shape shape, Init init) {
    const std::size_t n = diff::numel(shape);
    std::vector<double> values(n, init == Init::kOnes ? 1.0 : 0.0);
    if (init == Init::kGlorot) {
      const std::size_t fan_out = shape.front();
      const std::size_t fan_in = shape.size() > 1 ? shape[1] : 1;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : values) v = rng->uniform(-limit, limit);
    }
    return registry.add(path, Tensor(std::move(shape), std::move(values)));
  };
}

ParamFactory copy_factory(ParamRegistry& registry, const ParamRegistry& source) {
  return [&registry, &source](const std::string& path, Shape shape, Init) {
    const Tensor* src = source.find(path);
    if (!src) throw FormatError("parameter '" + path + "' missing from source");
    if (src->shape() != shape) {
      throw FormatError("parameter '" + path + "' has shape " + diff::shape_str(src->shape()) +
                        ", expected " + diff::shape_str(shape));
    }
    return registry.add(path, src->detach());
  };
}

Linear Linear::make(const ParamFactory& f, const std::string& path, std::size_t in,
                    std::size_t out, bool with_bias, Init weight_init) {
  Linear l;
  l.weight = f(path + ".weight", {out, in}, weight_init);
  if (with_bias) l.bias = f(path + ".bias", {out}, Init::kZeros);
  return l;
}

LayerNorm LayerNorm::make(const ParamFactory& f, const std::string& path, std::size_t d) {
  LayerNorm ln;
  ln.gain = f(path + ".gain", {d}, Init::kOnes);
  ln.bias = f(path + ".bias", {d}, Init::kZeros);
  return ln;
}

Mlp Mlp::make(const ParamFactory& f, const std::string& path, std::size_t in, std::size_t hidden,
              std::size_t out, Init out_init) {
  return Mlp{Linear::make(f, path + ".0", in, hidden), Linear::make(f, path + ".1", hidden, out, true, out_init)};
}

}  // namespace mscod::nn
