#include "mscod/equivariant_net.hpp"

#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "mscod/errors.hpp"

namespace mscod {

using diff::Shape;
using diff::Tensor;

void ModelConfig::validate() const {
  if (hidden_dim < 2) throw ConfigError("hidden_dim must be >= 2");
  if (heads == 0 || hidden_dim % heads != 0)
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden_dim (" +
                      std::to_string(hidden_dim) + ")");
  if (layers == 0) throw ConfigError("layers must be >= 1");
  if (knn_k == 0) throw ConfigError("knn_k must be >= 1");
  if (protein_types < 1 || ligand_types < 2) throw ConfigError("type vocabularies too small");
  if (ratios.empty()) throw ConfigError("at least one compression ratio is required");
  for (double r : ratios) bottleneck_width(r, hidden_dim);
  if (rbf_count == 0 || !(rbf_width > 0.0) || !(rbf_max > 0.0)) throw ConfigError("invalid radial basis settings");
  if (!(max_coord_step > 0.0)) throw ConfigError("max_coord_step must be positive");
}

LayerWeights LayerWeights::make(const nn::ParamFactory& f, const std::string& path,
                                const ModelConfig& cfg) {
  const std::size_t d = cfg.hidden_dim;
  const std::size_t edge = kNumEdgeTypes;
  LayerWeights w;
  w.query = nn::Linear::make(f, path + ".query", d, d, false);
  w.key = nn::Linear::make(f, path + ".key", 2 * d + edge, d, false);
  w.message = nn::Mlp::make(f, path + ".message",
                            2 * d + cfg.distance_features() + edge + cfg.time_features(), d, d);
  // Zero output layer: an untrained network leaves coordinates where they are.
  w.coord = nn::Mlp::make(f, path + ".coord",
                          cfg.distance_features() + 2 * d + edge + cfg.time_features(), d, 1,
                          nn::Init::kZeros);
  return w;
}

void ModelWeights::build(const nn::ParamFactory& f) {
  const std::size_t d = cfg_.hidden_dim;
  protein_embed = nn::Linear::make(f, "embed.protein", static_cast<std::size_t>(cfg_.protein_types), d);
  ligand_embed = nn::Linear::make(f, "embed.ligand", static_cast<std::size_t>(cfg_.ligand_types), d);
  for (std::size_t l = 0; l < cfg_.layers; ++l)
    layers.push_back(LayerWeights::make(f, "layer" + std::to_string(l), cfg_));
  for (std::size_t b = 0; b < cfg_.enhancement_blocks(); ++b) {
    const std::string p = "block" + std::to_string(b);
    if (cfg_.use_msib) {
      msib_protein.push_back(MsibWeights::make(f, p + ".msib_protein", d, cfg_.ratios));
      msib_ligand.push_back(MsibWeights::make(f, p + ".msib_ligand", d, cfg_.ratios));
    }
    if (cfg_.use_mhca) mhca.push_back(MhcaWeights::make(f, p + ".mhca", d, cfg_.heads, cfg_.shared_gate));
  }
  type_head = nn::Linear::make(f, "head.types", d, static_cast<std::size_t>(cfg_.ligand_types));
}

ModelWeights ModelWeights::random(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights w;
  w.cfg_ = cfg;
  w.registry_ = std::make_unique<nn::ParamRegistry>();
  w.build(nn::random_factory(*w.registry_, seed));
  return w;
}

ModelWeights ModelWeights::from_registry(const ModelConfig& cfg, const nn::ParamRegistry& source) {
  cfg.validate();
  ModelWeights w;
  w.cfg_ = cfg;
  w.registry_ = std::make_unique<nn::ParamRegistry>();
  w.build(nn::copy_factory(*w.registry_, source));
  if (w.registry_->entries().size() != source.entries().size()) {
    throw FormatError("parameter set has " + std::to_string(source.entries().size()) +
                      " tensors, model expects " + std::to_string(w.registry_->entries().size()));
  }
  return w;
}

ModelWeights ModelWeights::clone() const { return from_registry(cfg_, *registry_); }

std::vector<double> time_features(double t, std::size_t frequencies) {
  std::vector<double> f{t};
  for (std::size_t k = 0; k < frequencies; ++k) {
    const double w = std::numbers::pi * static_cast<double>(1u << k);
    f.push_back(std::sin(w * t));
    f.push_back(std::cos(w * t));
  }
  return f;
}

namespace {

Tensor repeat_rows(const std::vector<double>& row, std::size_t n) {
  std::vector<double> v;
  v.reserve(row.size() * n);
  for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), row.begin(), row.end());
  return Tensor(Shape{n, row.size()}, std::move(v));
}

Tensor distance_features(const Tensor& dist, const ModelConfig& cfg) {
  if (!cfg.use_rbf) return dist;
  const std::size_t r = cfg.rbf_count;
  std::vector<double> centers(r);
  for (std::size_t k = 0; k < r; ++k)
    centers[k] = -(r == 1 ? 0.0 : cfg.rbf_max * static_cast<double>(k) / static_cast<double>(r - 1));
  // Gaussian bumps exp(-(d - c)^2 / (2 w^2)).
  Tensor spread = diff::matmul(dist, Tensor::full({1, r}, 1.0));
  Tensor shifted = diff::add_row(spread, Tensor(Shape{r}, centers));
  return diff::exp(diff::scale(diff::square(shifted), -0.5 / (cfg.rbf_width * cfg.rbf_width)));
}

// Rows [begin, end) of W^T for a [out, in] weight, kept on the tape.
Tensor weight_columns_t(const Tensor& w, std::size_t begin, std::size_t end) {
  return diff::slice_rows(diff::transpose(w), begin, end);
}

// One segment of a per-edge input row.  Node segments are projected once per
// atom and then gathered, which is the same affine map as projecting the
// concatenated edge row but ~k times cheaper.
struct EdgePart {
  const Tensor* value;
  const std::vector<std::size_t>* rows;  // null: already per edge
};

Tensor edge_affine(const nn::Linear& lin, std::initializer_list<EdgePart> parts) {
  Tensor out;
  std::size_t col = 0;
  std::vector<Tensor> run;  // adjacent per-edge segments share one product
  std::size_t run_width = 0;
  auto accumulate = [&](const Tensor& y) { out = out.defined() ? diff::add(out, y) : y; };
  auto flush = [&] {
    if (run.empty()) return;
    const Tensor in = run.size() == 1 ? run[0] : diff::concat(run, 1);
    accumulate(diff::matmul(in, weight_columns_t(lin.weight, col - run_width, col)));
    run.clear();
    run_width = 0;
  };
  for (const EdgePart& part : parts) {
    const std::size_t width = part.value->dim(1);
    if (part.rows) {
      flush();
      accumulate(diff::gather_rows(diff::matmul(*part.value, weight_columns_t(lin.weight, col, col + width)),
                                   *part.rows));
    } else {
      run.push_back(*part.value);
      run_width += width;
    }
    col += width;
  }
  flush();
  if (col != lin.weight.dim(1)) throw DimensionError("edge_affine: segments do not cover the weight");
  return lin.bias.defined() ? diff::add_row(out, lin.bias) : out;
}

Tensor edge_mlp(const nn::Mlp& mlp, std::initializer_list<EdgePart> parts) {
  return mlp.second(diff::relu(edge_affine(mlp.first, parts)));
}

}  // namespace

NetState layer_forward(const NetState& state, const TypedGraph& graph, double t,
                       const LayerWeights& w, const ModelConfig& cfg, LayerStats* stats) {
  if (!std::isfinite(t)) throw NumericError("layer_forward: non-finite time");
  const std::size_t n = state.h.dim(0);
  const std::size_t k = graph.neighbors;
  if (k == 0 || graph.edges.empty()) return state;
  const std::size_t num_edges = graph.edges.size();
  const std::size_t d = cfg.hidden_dim;

  std::vector<std::size_t> src(num_edges), dst(num_edges);
  std::vector<double> edge_onehot(num_edges * kNumEdgeTypes, 0.0);
  for (std::size_t e = 0; e < num_edges; ++e) {
    src[e] = graph.edges[e].src;
    dst[e] = graph.edges[e].dst;
    edge_onehot[e * kNumEdgeTypes + static_cast<std::size_t>(graph.edges[e].type)] = 1.0;
  }
  const Tensor edge_attr(Shape{num_edges, static_cast<std::size_t>(kNumEdgeTypes)}, std::move(edge_onehot));
  const Tensor time_attr = repeat_rows(time_features(t, cfg.time_frequencies), num_edges);

  // Relative vectors and distances stay on the tape so gradients reach
  // coordinates updated by earlier layers.
  Tensor rel = diff::sub(diff::gather_rows(state.x, src), diff::gather_rows(state.x, dst));
  Tensor dist = diff::sqrt_eps(diff::reshape(diff::sum(diff::square(rel), 1), {num_edges, 1}), 1e-12);
  Tensor radial = distance_features(dist, cfg);

  Tensor message = edge_mlp(w.message, {{&state.h, &dst}, {&state.h, &src}, {&radial, nullptr},
                                        {&edge_attr, nullptr}, {&time_attr, nullptr}});
  if (cfg.attention_messages) {
    Tensor q = diff::gather_rows(w.query(state.h), dst);
    Tensor key = edge_affine(w.key, {{&state.h, &dst}, {&state.h, &src}, {&edge_attr, nullptr}});
    Tensor score = diff::scale(diff::sum(diff::mul(q, key), 1), 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor weight = diff::softmax(diff::reshape(score, {n, k}), 1);
    message = diff::scale_rows(message, diff::reshape(weight, {num_edges, 1}));
  }
  NetState next = state;
  next.h = diff::add(state.h, diff::sum(diff::reshape(message, {n, k, d}), 1));

  Tensor phi = edge_mlp(w.coord, {{&radial, nullptr}, {&next.h, &dst}, {&next.h, &src},
                                  {&edge_attr, nullptr}, {&time_attr, nullptr}});
  Tensor step = diff::sum(diff::reshape(diff::scale_rows(rel, phi), {n, k, 3}), 1);
  std::size_t clipped = 0;
  step = diff::clip_row_norm(step, cfg.max_coord_step, &clipped);
  if (clipped > 0) spdlog::debug("coordinate step clipped on {} atoms", clipped);
  if (stats) stats->clipped_steps += clipped;

  std::vector<double> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = state.ligand_mask[i] ? 1.0 : 0.0;
  next.x = diff::add(state.x, diff::scale_rows(step, Tensor(Shape{n, 1}, std::move(mask))));
  return next;
}

BackboneOutput backbone_forward(const Complex& pocket, const BeliefInput& belief, const ModelWeights& w,
                                std::vector<MhcaBlockInput>* mhca_inputs) {
  const ModelConfig& cfg = w.config();
  const std::size_t np = pocket.num_protein();
  const std::size_t nm = belief.mu.size();
  if (np == 0) throw DimensionError("backbone: pocket has no atoms");
  if (nm == 0) throw DimensionError("backbone: ligand must have at least one atom");
  if (belief.type_probs.size() != nm) throw DimensionError("backbone: belief rows disagree");
  const auto kt = static_cast<std::size_t>(cfg.ligand_types);
  const auto dp = static_cast<std::size_t>(cfg.protein_types);

  std::vector<double> protein_onehot(np * dp, 0.0);
  for (std::size_t i = 0; i < np; ++i) {
    const int ty = pocket.protein_type[i];
    if (ty < 0 || static_cast<std::size_t>(ty) >= dp)
      throw DimensionError("backbone: protein type " + std::to_string(ty) + " outside vocabulary");
    protein_onehot[i * dp + static_cast<std::size_t>(ty)] = 1.0;
  }
  std::vector<double> ligand_probs;
  ligand_probs.reserve(nm * kt);
  for (const auto& row : belief.type_probs) {
    if (row.size() != kt) throw DimensionError("backbone: type simplex width differs from K");
    ligand_probs.insert(ligand_probs.end(), row.begin(), row.end());
  }
  Tensor h = diff::concat({w.protein_embed(Tensor(Shape{np, dp}, std::move(protein_onehot))),
                           w.ligand_embed(Tensor(Shape{nm, kt}, std::move(ligand_probs)))},
                          0);

  std::vector<double> coords;
  coords.reserve((np + nm) * 3);
  for (const auto& p : pocket.protein_pos) coords.insert(coords.end(), p.begin(), p.end());
  for (const auto& p : belief.mu) coords.insert(coords.end(), p.begin(), p.end());

  NetState state;
  state.h = h;
  state.x = Tensor(Shape{np + nm, 3}, std::move(coords));
  state.num_protein = np;
  state.ligand_mask.assign(np + nm, false);
  for (std::size_t i = np; i < np + nm; ++i) state.ligand_mask[i] = true;

  const std::size_t blocks = cfg.enhancement_blocks();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    try {
      std::vector<Vec3> positions(np + nm);
      auto xv = state.x.values();
      for (std::size_t i = 0; i < np + nm; ++i) positions[i] = {xv[3 * i], xv[3 * i + 1], xv[3 * i + 2]};
      const TypedGraph graph = build_knn_graph(positions, np, cfg.knn_k);
      state = layer_forward(state, graph, belief.t, w.layers[l], cfg);

      const bool run_block = blocks > 0 && (cfg.enhance_every_layer || l + 1 == cfg.layers);
      if (run_block) {
        const std::size_t b = cfg.enhance_every_layer ? l : 0;
        Tensor hp = diff::slice_rows(state.h, 0, np);
        Tensor hm = diff::slice_rows(state.h, np, np + nm);
        if (cfg.use_msib) {
          hp = msib_forward(hp, w.msib_protein[b]);
          hm = msib_forward(hm, w.msib_ligand[b]);
        }
        if (cfg.use_mhca) {
          if (mhca_inputs) mhca_inputs->push_back({hp, hm});
          MhcaOutput out = mhca_forward(hp, hm, w.mhca[b]);
          hp = out.protein;
          hm = out.ligand;
        }
        state.h = diff::concat({hp, hm}, 0);
      }
    } catch (const NumericError& e) {
      throw NumericError("equivariant layer " + std::to_string(l) + ": " + e.what());
    }
  }

  BackboneOutput out;
  out.hidden = state.h;
  out.coords = diff::slice_rows(state.x, np, np + nm);
  out.logits = w.type_head(diff::slice_rows(state.h, np, np + nm));
  return out;
}

}  // namespace mscod
