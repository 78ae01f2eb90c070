#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mscod/geomgraph.hpp"
#include "mscod/mhca.hpp"
#include "mscod/msib.hpp"
#include "mscod/nn.hpp"

namespace mscod {

// Architecture settings. Defaults: d = 128, H = 8, ratios {0.125, 0.25, 0.5};
// the remaining values are local choices.
struct ModelConfig {
  std::size_t hidden_dim = 128;
  std::size_t heads = 8;
  std::size_t layers = 4;
  std::size_t knn_k = 16;
  int protein_types = 4;  // D_P
  int ligand_types = 6;   // K
  std::vector<double> ratios{kDefaultCompressionRatios.begin(), kDefaultCompressionRatios.end()};
  bool use_msib = true;
  bool use_mhca = true;
  bool enhance_every_layer = true;  // false: one MSIB/MHCA block after the stack
  bool attention_messages = true;   // false: plain neighbour sums
  bool use_rbf = true;              // false: raw distance scalar
  bool shared_gate = false;
  std::size_t rbf_count = 16;
  double rbf_max = 10.0;
  double rbf_width = 0.5;
  std::size_t time_frequencies = 4;
  double max_coord_step = 10.0;  // per-atom |dx| clip per layer, Angstrom

  std::size_t distance_features() const { return use_rbf ? rbf_count : 1; }
  std::size_t time_features() const { return 1 + 2 * time_frequencies; }
  std::size_t enhancement_blocks() const {
    if (!use_msib && !use_mhca) return 0;
    return enhance_every_layer ? layers : 1;
  }
  void validate() const;
};

// Parameters of one equivariant message-passing layer.
struct LayerWeights {
  nn::Linear query;     // h_i -> q_i
  nn::Linear key;       // [h_i, h_j, e_ij] -> k_ij
  nn::Mlp message;      // [h_i, h_j, rbf(d_ij), e_ij, t] -> m_ij
  nn::Mlp coord;        // [rbf(d_ij), h'_i, h'_j, e_ij, t] -> scalar

  static LayerWeights make(const nn::ParamFactory& f, const std::string& path, const ModelConfig& cfg);
};

// All trainable tensors, registered in a fixed order under dotted paths.
class ModelWeights {
 public:
  static ModelWeights random(const ModelConfig& cfg, std::uint64_t seed);
  // Same structure with values copied from `registry` (checkpoint load).
  static ModelWeights from_registry(const ModelConfig& cfg, const nn::ParamRegistry& registry);
  ModelWeights clone() const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamRegistry& registry() { return *registry_; }
  const nn::ParamRegistry& registry() const { return *registry_; }

  nn::Linear protein_embed;  // one-hot v_P -> h
  nn::Linear ligand_embed;   // belief simplex -> h
  std::vector<LayerWeights> layers;
  std::vector<MsibWeights> msib_protein;
  std::vector<MsibWeights> msib_ligand;
  std::vector<MhcaWeights> mhca;
  nn::Linear type_head;  // h -> K logits

 private:
  void build(const nn::ParamFactory& f);
  ModelConfig cfg_;
  std::unique_ptr<nn::ParamRegistry> registry_;
};

// Hidden features and coordinates of all atoms, protein rows first.
struct NetState {
  diff::Tensor h;  // [N x d]
  diff::Tensor x;  // [N x 3]
  std::vector<bool> ligand_mask;
  std::size_t num_protein = 0;
};

// Per-layer log of guard activity.
struct LayerStats {
  std::size_t clipped_steps = 0;
};

std::vector<double> time_features(double t, std::size_t frequencies);

// One message-passing update: attention-weighted messages into h, then a
// coordinate update applied to ligand rows only. The k-NN graph is built
// from the current coordinate values.
NetState layer_forward(const NetState& state, const TypedGraph& graph, double t,
                       const LayerWeights& w, const ModelConfig& cfg, LayerStats* stats = nullptr);

// Backbone input: coordinate mean and type simplex for the ligand.
struct BeliefInput {
  std::vector<Vec3> mu;
  std::vector<std::vector<double>> type_probs;  // [N_M][K]
  double t = 0.0;
};

struct BackboneOutput {
  diff::Tensor coords;  // [N_M x 3]
  diff::Tensor logits;  // [N_M x K]
  diff::Tensor hidden;  // final [N x d], for invariance checks
};

// Protein and ligand features entering one MHCA block.
struct MhcaBlockInput {
  diff::Tensor protein;
  diff::Tensor ligand;
};

// Full network: embeddings, L equivariant layers interleaved with MSIB/MHCA
// blocks, coordinate and type heads. The pocket must already be centred.
// `mhca_inputs`, when given, receives the inputs of every MHCA block.
BackboneOutput backbone_forward(const Complex& pocket, const BeliefInput& belief,
                                const ModelWeights& w,
                                std::vector<MhcaBlockInput>* mhca_inputs = nullptr);

}  // namespace mscod
