#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mscod/nn.hpp"

namespace mscod {

inline constexpr std::array<double, 3> kDefaultCompressionRatios{0.125, 0.25, 0.5};

// Bottleneck width for a compression ratio: ceil(ratio * d).
std::size_t bottleneck_width(double ratio, std::size_t d);

struct MsibPathway {
  double ratio = 0.0;
  nn::Linear encoder;  // [width x d]
  nn::Linear decoder;  // [d x width]
};

// Multi-scale information bottleneck: parallel encode/decode pathways whose
// decoded features are added back onto the input, then LayerNorm and a
// two-layer feed-forward block (no residual around it).
struct MsibWeights {
  std::size_t dim = 0;
  std::vector<MsibPathway> pathways;
  nn::LayerNorm norm;
  nn::Mlp ffn;  // d -> 2d -> d

  static MsibWeights make(const nn::ParamFactory& f, const std::string& path, std::size_t d,
                          std::span<const double> ratios = kDefaultCompressionRatios);
};

// Decoded features of one pathway, elementwise >= 0.
diff::Tensor msib_pathway(const diff::Tensor& h, const MsibPathway& p);
// H + sum of all pathway decodings.
diff::Tensor msib_fusion(const diff::Tensor& h, const MsibWeights& w);
diff::Tensor msib_forward(const diff::Tensor& h, const MsibWeights& w);

}  // namespace mscod
