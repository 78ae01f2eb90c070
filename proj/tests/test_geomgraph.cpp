#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "mscod/errors.hpp"
#include "mscod/geomgraph.hpp"
#include "mscod/rng.hpp"

using namespace mscod;

namespace {

std::vector<Vec3> random_points(Rng& rng, std::size_t n, double scale = 3.0) {
  std::vector<Vec3> p(n);
  for (auto& v : p)
    for (auto& c : v) c = scale * rng.normal();
  return p;
}

// Brute-force oracle: for each centre, sort every other atom by (distance, index).
std::vector<std::vector<std::size_t>> brute_knn(const std::vector<Vec3>& p, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) others.push_back(j);
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      return pairwise_distance(p[i], p[a]) < pairwise_distance(p[i], p[b]);
    });
    others.resize(std::min(k, others.size()));
    out[i] = others;
  }
  return out;
}

}  // namespace

TEST(GeomGraph, KnnMatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_points(rng, 30);
    const auto g = build_knn_graph(p, 18, 16);
    const auto oracle = brute_knn(p, 16);
    ASSERT_EQ(g.neighbors, 16u);
    ASSERT_EQ(g.edges.size(), 30u * 16u);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t r = 0; r < 16; ++r) {
        const Edge& e = g.edges[i * 16 + r];
        EXPECT_EQ(e.dst, i);
        EXPECT_EQ(e.src, oracle[i][r]);
        EXPECT_DOUBLE_EQ(e.distance, pairwise_distance(p[i], p[e.src]));
      }
  }
}

TEST(GeomGraph, TiesBreakByLowerIndex) {
  // Atoms 1..4 all at distance 1 from atom 0.
  const std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  const auto g = build_knn_graph(p, 1, 2);
  EXPECT_EQ(g.edges[0].src, 1u);
  EXPECT_EQ(g.edges[1].src, 2u);
}

TEST(GeomGraph, KIsClippedToAtomCountMinusOne) {
  Rng rng(2);
  const auto p = random_points(rng, 5);
  const auto g = build_knn_graph(p, 3, 16);
  EXPECT_EQ(g.neighbors, 4u);
  EXPECT_EQ(g.edges.size(), 20u);
  EXPECT_THROW(build_knn_graph(p, 3, 0), ConfigError);
}

TEST(GeomGraph, NoSelfEdgesAndNoDuplicates) {
  Rng rng(3);
  const auto p = random_points(rng, 25);
  const auto g = build_knn_graph(p, 10, 8);
  for (std::size_t i = 0; i < 25; ++i) {
    std::vector<std::size_t> src;
    for (std::size_t r = 0; r < 8; ++r) src.push_back(g.edges[i * 8 + r].src);
    EXPECT_EQ(std::count(src.begin(), src.end(), i), 0);
    std::sort(src.begin(), src.end());
    EXPECT_EQ(std::adjacent_find(src.begin(), src.end()), src.end());
  }
}

TEST(GeomGraph, EdgeTypesFollowMembership) {
  EXPECT_EQ(classify_edge(0, 1, 3), EdgeType::kProteinProtein);
  EXPECT_EQ(classify_edge(3, 4, 3), EdgeType::kLigandLigand);
  EXPECT_EQ(classify_edge(0, 4, 3), EdgeType::kProteinLigand);
  EXPECT_EQ(classify_edge(4, 0, 3), EdgeType::kLigandProtein);
  Rng rng(4);
  const auto p = random_points(rng, 12);
  for (const Edge& e : build_knn_graph(p, 7, 5).edges) EXPECT_EQ(e.type, classify_edge(e.src, e.dst, 7));
}

TEST(GeomGraph, GraphIsInvariantUnderRigidMotion) {
  Rng rng(5);
  const auto p = random_points(rng, 20);
  auto q = p;
  const double c = std::cos(0.7), s = std::sin(0.7);
  for (auto& v : q) v = {c * v[0] - s * v[1] + 3.0, s * v[0] + c * v[1] - 1.0, v[2] + 0.5};
  const auto a = build_knn_graph(p, 8, 6), b = build_knn_graph(q, 8, 6);
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    EXPECT_EQ(a.edges[e].src, b.edges[e].src);
    EXPECT_NEAR(a.edges[e].distance, b.edges[e].distance, 1e-12);
  }
}

TEST(GeomGraph, CentringPutsProteinCentroidAtOrigin) {
  Rng rng(6);
  Complex c;
  c.name = "t";
  c.protein_pos = random_points(rng, 9);
  for (auto& v : c.protein_pos) v[0] += 10;
  c.protein_type.assign(9, 0);
  c.ligand_pos = random_points(rng, 3);
  c.ligand_type.assign(3, 1);
  c.protein_types = 2;
  c.ligand_types = 2;
  const Complex z = center_by_protein_com(c);
  const Vec3 com = protein_center_of_mass(z);
  for (double v : com) EXPECT_NEAR(v, 0.0, 1e-12);
  // Relative geometry is untouched.
  EXPECT_NEAR(pairwise_distance(z.protein_pos[0], z.ligand_pos[1]),
              pairwise_distance(c.protein_pos[0], c.ligand_pos[1]), 1e-12);
}

TEST(GeomGraph, ValidateNamesTheViolation) {
  Complex c;
  c.name = "x";
  c.protein_pos = {{0, 0, 0}};
  c.protein_type = {0};
  c.protein_types = 1;
  c.ligand_types = 2;
  try {
    c.validate();
    FAIL() << "empty ligand accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("N_M must be ≥ 1"), std::string::npos);
  }
  c.ligand_pos = {{1, 0, 0}};
  c.ligand_type = {2};
  EXPECT_THROW(c.validate(), FormatError);
  c.ligand_type = {1};
  EXPECT_NO_THROW(c.validate());
}
