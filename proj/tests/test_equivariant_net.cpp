#include <gtest/gtest.h>

#include "mscod/check.hpp"
#include "mscod/equivariant_net.hpp"
#include "mscod/errors.hpp"
#include "test_util.hpp"

using namespace mscod;
using diff::Tensor;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.heads = 4;
  cfg.layers = 2;
  return cfg;
}

void jitter(ModelWeights& w, Rng& rng, double scale) {
  for (auto& e : w.registry().entries())
    for (auto& v : e.tensor.mutable_values()) v += scale * rng.normal();
}

BeliefInput belief_for(const Complex& c, double t) {
  BeliefInput b;
  b.mu = c.ligand_pos;
  for (std::size_t i = 0; i < c.num_ligand(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(c.ligand_types), 0.1 / (c.ligand_types - 1));
    row[static_cast<std::size_t>(c.ligand_type[i])] = 0.9;
    b.type_probs.push_back(row);
  }
  b.t = t;
  return b;
}

Vec3 apply(const check::Mat3& r, const Vec3& p, const Vec3& t) {
  Vec3 out{};
  for (int a = 0; a < 3; ++a) out[a] = r[a][0] * p[0] + r[a][1] * p[1] + r[a][2] * p[2] + t[a];
  return out;
}

NetState random_state(Rng& rng, std::size_t np, std::size_t nm, std::size_t d) {
  NetState s;
  s.h = testutil::random_tensor({np + nm, d}, rng);
  s.x = testutil::random_tensor({np + nm, 3}, rng, 2.0);
  s.num_protein = np;
  s.ligand_mask.assign(np + nm, false);
  for (std::size_t i = np; i < np + nm; ++i) s.ligand_mask[i] = true;
  return s;
}

TypedGraph graph_of(const NetState& s, std::size_t k) {
  std::vector<Vec3> p(s.x.dim(0));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = {s.x.at(i, 0), s.x.at(i, 1), s.x.at(i, 2)};
  return build_knn_graph(p, s.num_protein, k);
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(EquivariantNet, TimeFeaturesLayout) {
  const auto f = time_features(0.25, 4);
  ASSERT_EQ(f.size(), 9u);
  EXPECT_DOUBLE_EQ(f[0], 0.25);
  for (double v : f) EXPECT_LE(std::abs(v), 1.0);
}

TEST(EquivariantNet, FreshCoordinateHeadLeavesPositionsUnchanged) {
  // The coordinate MLP output layer starts at zero, so no atom moves.
  Rng rng(1);
  const ModelConfig cfg = small_config();
  const ModelWeights w = ModelWeights::random(cfg, 3);
  const NetState s = random_state(rng, 6, 3, 16);
  const NetState out = layer_forward(s, graph_of(s, cfg.knn_k), 0.5, w.layers[0], cfg);
  EXPECT_EQ(to_vec(out.x), to_vec(s.x));
  EXPECT_NE(to_vec(out.h), to_vec(s.h));
}

TEST(EquivariantNet, SingleAtomHasNoNeighbours) {
  Rng rng(2);
  const ModelConfig cfg = small_config();
  ModelWeights w = ModelWeights::random(cfg, 4);
  jitter(w, rng, 0.1);
  NetState s = random_state(rng, 0, 1, 16);
  const NetState out = layer_forward(s, graph_of(s, cfg.knn_k), 0.5, w.layers[0], cfg);
  EXPECT_EQ(to_vec(out.x), to_vec(s.x));
  EXPECT_EQ(to_vec(out.h), to_vec(s.h));
}

TEST(EquivariantNet, LayerIsEquivariantAndFreezesProtein) {
  Rng rng(3);
  const ModelConfig cfg = small_config();
  ModelWeights w = ModelWeights::random(cfg, 5);
  jitter(w, rng, 0.1);
  const NetState s = random_state(rng, 8, 4, 16);
  const NetState a = layer_forward(s, graph_of(s, cfg.knn_k), 0.3, w.layers[0], cfg);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.x.at(i, c), s.x.at(i, c));
  EXPECT_NE(to_vec(a.x), to_vec(s.x));

  const check::Mat3 r = check::random_rotation(rng);
  const Vec3 t{1.5, -2.0, 0.7};
  NetState m = s;
  std::vector<double> moved;
  for (std::size_t i = 0; i < 12; ++i) {
    const Vec3 p = apply(r, {s.x.at(i, 0), s.x.at(i, 1), s.x.at(i, 2)}, t);
    moved.insert(moved.end(), p.begin(), p.end());
  }
  m.x = Tensor({12, 3}, moved);
  const NetState b = layer_forward(m, graph_of(m, cfg.knn_k), 0.3, w.layers[0], cfg);
  EXPECT_LE(testutil::max_abs_diff(a.h.values(), b.h.values()), 1e-10);
  for (std::size_t i = 0; i < 12; ++i) {
    const Vec3 expect = apply(r, {a.x.at(i, 0), a.x.at(i, 1), a.x.at(i, 2)}, t);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.x.at(i, c), expect[c], 1e-10);
  }
}

TEST(EquivariantNet, BackboneShapesAndDeterminism) {
  Rng rng(4);
  const ModelConfig cfg = small_config();
  ModelWeights w = ModelWeights::random(cfg, 6);
  jitter(w, rng, 0.05);
  const Complex c = check::random_complex(rng, 10, 5, cfg.protein_types, cfg.ligand_types);
  const auto a = backbone_forward(c, belief_for(c, 0.4), w);
  const auto b = backbone_forward(c, belief_for(c, 0.4), w);
  EXPECT_EQ(a.coords.shape(), (diff::Shape{5, 3}));
  EXPECT_EQ(a.logits.shape(), (diff::Shape{5, 6}));
  EXPECT_EQ(a.hidden.shape(), (diff::Shape{15, 16}));
  EXPECT_EQ(to_vec(a.coords), to_vec(b.coords));
  EXPECT_EQ(to_vec(a.logits), to_vec(b.logits));
}

TEST(EquivariantNet, BackboneEquivarianceAcrossAblations) {
  for (int variant = 0; variant < 4; ++variant) {
    ModelConfig cfg = small_config();
    cfg.use_msib = variant & 1;
    cfg.use_mhca = variant & 2;
    const auto rep = check::equivariance(cfg, 3, 3, 100 + variant);
    EXPECT_LE(rep.max_coord_dev, 1e-6) << "variant " << variant;
    EXPECT_LE(rep.max_logit_dev, 1e-6) << "variant " << variant;
    EXPECT_LE(rep.max_hidden_dev, 1e-6) << "variant " << variant;
  }
}

TEST(EquivariantNet, LigandPermutationPermutesOutputs) {
  Rng rng(5);
  const ModelConfig cfg = small_config();
  ModelWeights w = ModelWeights::random(cfg, 7);
  jitter(w, rng, 0.05);
  const Complex c = check::random_complex(rng, 10, 4, cfg.protein_types, cfg.ligand_types);
  const BeliefInput b = belief_for(c, 0.6);
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  BeliefInput pb = b;
  for (std::size_t i = 0; i < 4; ++i) {
    pb.mu[i] = b.mu[perm[i]];
    pb.type_probs[i] = b.type_probs[perm[i]];
  }
  const auto o = backbone_forward(c, b, w), po = backbone_forward(c, pb, w);
  const Tensor expect = diff::gather_rows(o.coords, perm);
  EXPECT_LE(testutil::max_abs_diff(expect.values(), po.coords.values()), 1e-10);
}

TEST(EquivariantNet, ZeroedHeadsGiveBeliefMeanAndConstantLogits) {
  Rng rng(6);
  const ModelConfig cfg = small_config();
  ModelWeights w = ModelWeights::random(cfg, 8);
  jitter(w, rng, 0.05);
  for (auto& l : w.layers)
    for (Tensor* t : {&l.coord.second.weight, &l.coord.second.bias})
      std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  auto& tw = w.type_head.weight;
  std::fill(tw.mutable_values().begin(), tw.mutable_values().end(), 0.0);
  const Complex c = check::random_complex(rng, 9, 3, cfg.protein_types, cfg.ligand_types);
  const BeliefInput b = belief_for(c, 0.2);
  const auto o = backbone_forward(c, b, w);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(o.coords.at(i, a), b.mu[i][a]);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(o.logits.at(i, k), o.logits.at(0, k));
}

TEST(EquivariantNet, MhcaHookSeesEveryBlock) {
  Rng rng(7);
  const ModelConfig cfg = small_config();
  const ModelWeights w = ModelWeights::random(cfg, 9);
  const Complex c = check::random_complex(rng, 7, 2, cfg.protein_types, cfg.ligand_types);
  std::vector<MhcaBlockInput> seen;
  backbone_forward(c, belief_for(c, 0.5), w, &seen);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].protein.dim(0), 7u);
  EXPECT_EQ(seen[0].ligand.dim(0), 2u);
}

TEST(EquivariantNet, ConfigValidation) {
  ModelConfig cfg = small_config();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.layers = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.use_msib = cfg.use_mhca = false;
  EXPECT_EQ(cfg.enhancement_blocks(), 0u);
  cfg.use_mhca = true;
  cfg.enhance_every_layer = false;
  EXPECT_EQ(cfg.enhancement_blocks(), 1u);
}

TEST(EquivariantNet, CloneIsIndependent) {
  const ModelConfig cfg = small_config();
  const ModelWeights w = ModelWeights::random(cfg, 10);
  ModelWeights c = w.clone();
  c.type_head.weight.mutable_values()[0] += 1.0;
  EXPECT_NE(c.type_head.weight.values()[0], w.type_head.weight.values()[0]);
  EXPECT_EQ(c.registry().scalar_count(), w.registry().scalar_count());
}
