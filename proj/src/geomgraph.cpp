#include "mscod/geomgraph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mscod/errors.hpp"

namespace mscod {

void Complex::validate() const {
  if (protein_pos.empty()) throw FormatError("complex '" + name + "': N_P must be ≥ 1");
  if (ligand_pos.empty()) throw FormatError("complex '" + name + "': N_M must be ≥ 1");
  if (protein_type.size() != protein_pos.size() || ligand_type.size() != ligand_pos.size())
    throw FormatError("complex '" + name + "': type and coordinate counts differ");
  if (protein_types < 1 || ligand_types < 1)
    throw FormatError("complex '" + name + "': type vocabularies must be non-empty");
  auto check = [&](const std::vector<Vec3>& pos, const std::vector<int>& types, int vocab,
                   const char* part) {
    for (std::size_t i = 0; i < pos.size(); ++i) {
      for (double v : pos[i]) {
        if (!std::isfinite(v))
          throw FormatError("complex '" + name + "': non-finite " + part + " coordinate at row " +
                            std::to_string(i));
      }
      if (types[i] < 0 || types[i] >= vocab)
        throw FormatError("complex '" + name + "': " + part + " type " + std::to_string(types[i]) +
                          " out of range at row " + std::to_string(i));
    }
  };
  check(protein_pos, protein_type, protein_types, "protein");
  check(ligand_pos, ligand_type, ligand_types, "ligand");
}

bool operator==(const Complex& a, const Complex& b) {
  return a.name == b.name && a.protein_pos == b.protein_pos && a.protein_type == b.protein_type &&
         a.ligand_pos == b.ligand_pos && a.ligand_type == b.ligand_type &&
         a.protein_types == b.protein_types && a.ligand_types == b.ligand_types;
}

double pairwise_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Vec3 protein_center_of_mass(const Complex& c) {
  Vec3 com{0.0, 0.0, 0.0};
  for (const auto& p : c.protein_pos)
    for (int a = 0; a < 3; ++a) com[a] += p[a];
  for (auto& v : com) v /= static_cast<double>(c.protein_pos.size());
  return com;
}

Complex center_by_protein_com(const Complex& c) {
  const Vec3 com = protein_center_of_mass(c);
  Complex out = c;
  for (auto& p : out.protein_pos)
    for (int a = 0; a < 3; ++a) p[a] -= com[a];
  for (auto& p : out.ligand_pos)
    for (int a = 0; a < 3; ++a) p[a] -= com[a];
  return out;
}

EdgeType classify_edge(std::size_t src, std::size_t dst, std::size_t num_protein) {
  const bool src_p = src < num_protein;
  const bool dst_p = dst < num_protein;
  if (src_p && dst_p) return EdgeType::kProteinProtein;
  if (!src_p && !dst_p) return EdgeType::kLigandLigand;
  return src_p ? EdgeType::kProteinLigand : EdgeType::kLigandProtein;
}

const char* edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::kProteinProtein: return "PP";
    case EdgeType::kLigandLigand: return "LL";
    case EdgeType::kProteinLigand: return "PL";
    case EdgeType::kLigandProtein: return "LP";
  }
  return "?";
}

TypedGraph build_knn_graph(const std::vector<Vec3>& positions, std::size_t num_protein, std::size_t k) {
  if (k < 1) throw ConfigError("build_knn_graph: k must be >= 1");
  const std::size_t n = positions.size();
  TypedGraph g;
  g.num_atoms = n;
  g.neighbors = n > 0 ? std::min(k, n - 1) : 0;
  if (g.neighbors < k && n > 1) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      spdlog::warn("k-NN graph: k={} clipped to {} for a complex of {} atoms", k, g.neighbors, n);
    } else {
      spdlog::debug("k-NN graph: k={} clipped to {}", k, g.neighbors);
    }
  }
  if (g.neighbors == 0) return g;

  g.edges.reserve(n * g.neighbors);
  std::vector<std::pair<double, std::size_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand[c++] = {pairwise_distance(positions[i], positions[j]), j};
    }
    // (distance, index) ordering breaks ties by lower index.
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(g.neighbors), cand.end());
    for (std::size_t s = 0; s < g.neighbors; ++s) {
      const auto [d, j] = cand[s];
      g.edges.push_back(Edge{j, i, classify_edge(j, i, num_protein), d});
    }
  }
  return g;
}

TypedGraph build_knn_graph(const Complex& c, std::size_t k) {
  std::vector<Vec3> all = c.protein_pos;
  all.insert(all.end(), c.ligand_pos.begin(), c.ligand_pos.end());
  return build_knn_graph(all, c.num_protein(), k);
}

}  // namespace mscod
