#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace mscod {

using Vec3 = std::array<double, 3>;

// One pocket plus one ligand. Types are stored as indices; the one-hot view
// is produced on demand (exactly one 1 per row by construction).
struct Complex {
  std::string name;
  std::vector<Vec3> protein_pos;
  std::vector<int> protein_type;  // in [0, protein_types)
  std::vector<Vec3> ligand_pos;
  std::vector<int> ligand_type;  // in [0, ligand_types)
  int protein_types = 0;         // D_P
  int ligand_types = 0;          // K

  std::size_t num_protein() const { return protein_pos.size(); }
  std::size_t num_ligand() const { return ligand_pos.size(); }
  std::size_t num_atoms() const { return num_protein() + num_ligand(); }

  // Throws FormatError naming the first violated invariant.
  void validate() const;
};

bool operator==(const Complex& a, const Complex& b);

double pairwise_distance(const Vec3& a, const Vec3& b);

Vec3 protein_center_of_mass(const Complex& c);

// Translates protein and ligand so the protein centroid sits at the origin.
Complex center_by_protein_com(const Complex& c);

enum class EdgeType : int { kProteinProtein = 0, kLigandLigand = 1, kProteinLigand = 2, kLigandProtein = 3 };
inline constexpr int kNumEdgeTypes = 4;

EdgeType classify_edge(std::size_t src, std::size_t dst, std::size_t num_protein);
const char* edge_type_name(EdgeType t);

struct Edge {
  std::size_t src;  // neighbour j
  std::size_t dst;  // centre i; messages flow src -> dst
  EdgeType type;
  double distance;
};

// Directed k-NN graph. Edges are grouped by destination: the incoming edges of
// atom i occupy [i * neighbors, (i + 1) * neighbors), nearest first.
struct TypedGraph {
  std::size_t num_atoms = 0;
  std::size_t neighbors = 0;  // effective k = min(k, num_atoms - 1)
  std::vector<Edge> edges;
};

// k-NN graph over the union of atom positions; protein atoms come first.
// Ties are broken by lower atom index. k larger than num_atoms - 1 is clipped
// with a logged warning.
TypedGraph build_knn_graph(const std::vector<Vec3>& positions, std::size_t num_protein, std::size_t k);
TypedGraph build_knn_graph(const Complex& c, std::size_t k);

}  // namespace mscod
