#include "mscod/mhca.hpp"

#include <cmath>

#include "mscod/errors.hpp"

namespace mscod {

using diff::Tensor;

MhcaWeights MhcaWeights::make(const nn::ParamFactory& f, const std::string& path, std::size_t d,
                              std::size_t heads, bool shared_gate) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("mhca: head count " + std::to_string(heads) + " must divide hidden width " +
                      std::to_string(d));
  }
  MhcaWeights w;
  w.dim = d;
  w.head_dim = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string p = path + ".head" + std::to_string(h);
    MhcaHead head;
    head.protein_proj = nn::Linear::make(f, p + ".wp", d, w.head_dim, false);
    head.ligand_proj = nn::Linear::make(f, p + ".wl", d, w.head_dim, false);
    if (shared_gate && h > 0) {
      head.gate = w.heads.front().gate;
    } else {
      head.gate = nn::Linear::make(f, (shared_gate ? path + ".gate" : p + ".gate"), d, w.head_dim, false);
    }
    head.update = nn::Linear::make(f, p + ".wu", w.head_dim, d, false);
    w.heads.push_back(std::move(head));
  }
  w.fuse = nn::Linear::make(f, path + ".wo", heads * d, d, false);
  w.ligand_norm = nn::LayerNorm::make(f, path + ".ligand_norm", d);
  w.ligand_ffn = nn::Mlp::make(f, path + ".ligand_ffn", d, 2 * d, d);
  w.protein_norm = nn::LayerNorm::make(f, path + ".protein_norm", d);
  w.protein_ffn = nn::Mlp::make(f, path + ".protein_ffn", d, 2 * d, d);
  return w;
}

namespace {

void check_inputs(const Tensor& hp, const Tensor& hm, const MhcaWeights& w) {
  if (hp.rank() != 2 || hm.rank() != 2 || hp.dim(1) != w.dim || hm.dim(1) != w.dim) {
    throw DimensionError("mhca: inputs " + diff::shape_str(hp.shape()) + " and " +
                         diff::shape_str(hm.shape()) + " do not match width " + std::to_string(w.dim));
  }
}

}  // namespace

MhcaHeadTrace mhca_head_trace(const Tensor& hp, const Tensor& hm, const MhcaWeights& w,
                              std::size_t head) {
  check_inputs(hp, hm, w);
  if (head >= w.heads.size()) {
    throw ConfigError("mhca: head " + std::to_string(head) + " out of range (" +
                      std::to_string(w.heads.size()) + " heads)");
  }
  const MhcaHead& hw = w.heads[head];
  MhcaHeadTrace t;
  t.projected_protein = hw.protein_proj(hp);
  Tensor projected_ligand = hw.ligand_proj(hm);
  Tensor scores = diff::scale(diff::matmul_nt(t.projected_protein, projected_ligand),
                              1.0 / std::sqrt(static_cast<double>(w.head_dim)));
  // Normalised over protein atoms: each ligand column is a distribution.
  t.attention = diff::softmax(scores, 0);
  t.context = diff::matmul(diff::transpose(t.attention), t.projected_protein);
  t.gate = diff::sigmoid(hw.gate(hm));
  return t;
}

Tensor attention_map(const Tensor& hp, const Tensor& hm, const MhcaWeights& w, std::size_t head) {
  return mhca_head_trace(hp, hm, w, head).attention;
}

MhcaOutput mhca_forward(const Tensor& hp, const Tensor& hm, const MhcaWeights& w) {
  check_inputs(hp, hm, w);
  std::vector<Tensor> updates;
  updates.reserve(w.heads.size());
  for (std::size_t h = 0; h < w.heads.size(); ++h) {
    MhcaHeadTrace t = mhca_head_trace(hp, hm, w, h);
    Tensor gated = diff::mul(t.context, t.gate);
    updates.push_back(w.heads[h].update(gated));
  }
  Tensor attended = w.fuse(diff::concat(std::span<const Tensor>(updates), 1));
  Tensor enhanced = w.ligand_norm(diff::add(attended, hm));
  MhcaOutput out;
  out.ligand = w.ligand_ffn(enhanced);
  out.protein = w.protein_ffn(w.protein_norm(hp));
  return out;
}

}  // namespace mscod
