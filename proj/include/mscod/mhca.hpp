#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mscod/nn.hpp"

namespace mscod {

struct MhcaHead {
  nn::Linear protein_proj;  // W_P  [d_h x d], no bias
  nn::Linear ligand_proj;   // W_L  [d_h x d], no bias
  nn::Linear gate;          // W_g  [d_h x d], no bias; aliases head 0 when gates are shared
  nn::Linear update;        // W_u  [d x d_h], no bias
};

// Multi-head cooperative attention. Ligand atoms attend over protein atoms;
// the protein pathway never sees the ligand.
struct MhcaWeights {
  std::size_t dim = 0;
  std::size_t head_dim = 0;
  std::vector<MhcaHead> heads;
  nn::Linear fuse;  // W_o [d x (H*d)], no bias
  nn::LayerNorm ligand_norm;
  nn::Mlp ligand_ffn;
  nn::LayerNorm protein_norm;
  nn::Mlp protein_ffn;

  // Throws ConfigError unless `heads` divides `d`. With shared_gate every head
  // uses a single gating matrix.
  static MhcaWeights make(const nn::ParamFactory& f, const std::string& path, std::size_t d,
                          std::size_t heads, bool shared_gate = false);
};

struct MhcaOutput {
  diff::Tensor protein;  // H_p_final [N_p x d]
  diff::Tensor ligand;   // H_m_final [N_l x d]
};

MhcaOutput mhca_forward(const diff::Tensor& h_protein, const diff::Tensor& h_ligand,
                        const MhcaWeights& w);

// Column-stochastic attention of one head, [N_p x N_l].
diff::Tensor attention_map(const diff::Tensor& h_protein, const diff::Tensor& h_ligand,
                           const MhcaWeights& w, std::size_t head);

// Intermediates of a single head, exposed for structural checks.
struct MhcaHeadTrace {
  diff::Tensor projected_protein;  // P_h
  diff::Tensor attention;          // A_h
  diff::Tensor context;            // C_h
  diff::Tensor gate;               // G_h
};
MhcaHeadTrace mhca_head_trace(const diff::Tensor& h_protein, const diff::Tensor& h_ligand,
                              const MhcaWeights& w, std::size_t head);

}  // namespace mscod
