#include "mscod/msib.hpp"

#include <cmath>

#include "mscod/errors.hpp"

namespace mscod {

using diff::Tensor;

std::size_t bottleneck_width(double ratio, std::size_t d) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("compression ratio must lie in (0, 1)");
  const auto w = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(d)));
  if (w < 1 || w >= d) {
    throw ConfigError("bottleneck width " + std::to_string(w) + " for ratio " +
                      std::to_string(ratio) + " must be in [1, " + std::to_string(d) + ")");
  }
  return w;
}

MsibWeights MsibWeights::make(const nn::ParamFactory& f, const std::string& path, std::size_t d,
                              std::span<const double> ratios) {
  MsibWeights w;
  w.dim = d;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    const std::size_t width = bottleneck_width(ratios[r], d);
    const std::string p = path + ".path" + std::to_string(r);
    w.pathways.push_back({ratios[r], nn::Linear::make(f, p + ".enc", d, width),
                          nn::Linear::make(f, p + ".dec", width, d)});
  }
  w.norm = nn::LayerNorm::make(f, path + ".norm", d);
  w.ffn = nn::Mlp::make(f, path + ".ffn", d, 2 * d, d);
  return w;
}

Tensor msib_pathway(const Tensor& h, const MsibPathway& p) {
  Tensor encoded = diff::relu(p.encoder(h));
  // Second ReLU on a non-negative tensor is the identity; kept as written.
  Tensor processed = diff::relu(encoded);
  return diff::relu(p.decoder(processed));
}

Tensor msib_fusion(const Tensor& h, const MsibWeights& w) {
  if (h.rank() != 2 || h.dim(1) != w.dim) {
    throw DimensionError("msib: input " + diff::shape_str(h.shape()) + " does not match width " +
                         std::to_string(w.dim));
  }
  Tensor fused = h;
  for (const auto& p : w.pathways) fused = diff::add(fused, msib_pathway(h, p));
  return fused;
}

Tensor msib_forward(const Tensor& h, const MsibWeights& w) {
  return w.ffn(w.norm(msib_fusion(h, w)));
}

}  // namespace mscod
