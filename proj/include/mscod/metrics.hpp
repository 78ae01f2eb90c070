#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mscod/geomgraph.hpp"

namespace mscod {

inline constexpr double kDefaultClashThreshold = 2.0;
inline constexpr double kDefaultRmsdCutoff = 2.0;

// Root-mean-square deviation with atoms paired by index, no alignment.
double rmsd(const std::vector<Vec3>& gen, const std::vector<Vec3>& ref);

// Protein-ligand atom pairs closer than `threshold`.
std::size_t clash_count(const Complex& c, double threshold = kDefaultClashThreshold);

// Fraction of pairs with rmsd < cutoff. Throws on an empty or unpaired list.
double rmsd_pass_rate(const std::vector<std::vector<Vec3>>& samples, const std::vector<std::vector<Vec3>>& refs,
                      double cutoff = kDefaultRmsdCutoff);

struct SampleMetrics {
  std::string name;
  double rmsd = 0.0;
  std::size_t clashes = 0;
  double type_accuracy = 0.0;
  bool rmsd_pass = false;
  bool clash_free = false;
};

struct MetricsReport {
  std::vector<SampleMetrics> rows;
  double rmsd_pass_rate = 0.0;
  double clash_free_rate = 0.0;
  double mean_rmsd = 0.0;
  double mean_type_accuracy = 0.0;
};

// Scores each sample (a complex whose ligand is the generated molecule)
// against the reference ligand.
MetricsReport evaluate_samples(const std::vector<Complex>& samples, const Complex& reference,
                               double rmsd_cutoff = kDefaultRmsdCutoff,
                               double clash_threshold = kDefaultClashThreshold);

// Tab-separated: header, one row per sample, then "#"-prefixed aggregates.
std::string format_report(const MetricsReport& report);

}  // namespace mscod
