#include "mscod/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "mscod/errors.hpp"

namespace mscod {

double rmsd(const std::vector<Vec3>& gen, const std::vector<Vec3>& ref) {
  if (gen.size() != ref.size())
    throw DimensionError("rmsd: atom counts differ (" + std::to_string(gen.size()) + " vs " +
                         std::to_string(ref.size()) + ")");
  if (gen.empty()) throw DimensionError("rmsd: no atoms");
  double sq = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const double d = gen[i][a] - ref[i][a];
      sq += d * d;
    }
  return std::sqrt(sq / static_cast<double>(gen.size()));
}

std::size_t clash_count(const Complex& c, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("clash_count: threshold must be positive");
  std::size_t n = 0;
  for (const auto& p : c.protein_pos)
    for (const auto& l : c.ligand_pos)
      if (pairwise_distance(p, l) < threshold) ++n;
  return n;
}

double rmsd_pass_rate(const std::vector<std::vector<Vec3>>& samples, const std::vector<std::vector<Vec3>>& refs,
                      double cutoff) {
  if (samples.empty()) throw ConfigError("no samples");
  if (samples.size() != refs.size()) throw DimensionError("rmsd_pass_rate: sample and reference lists differ in length");
  std::size_t pass = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (rmsd(samples[i], refs[i]) < cutoff) ++pass;
  return static_cast<double>(pass) / static_cast<double>(samples.size());
}

MetricsReport evaluate_samples(const std::vector<Complex>& samples, const Complex& reference, double rmsd_cutoff,
                               double clash_threshold) {
  if (samples.empty()) throw ConfigError("no samples");
  MetricsReport rep;
  for (const auto& s : samples) {
    if (s.num_ligand() != reference.num_ligand())
      throw DimensionError("sample '" + s.name + "' has " + std::to_string(s.num_ligand()) +
                           " ligand atoms, reference has " + std::to_string(reference.num_ligand()));
    SampleMetrics m;
    m.name = s.name;
    m.rmsd = rmsd(s.ligand_pos, reference.ligand_pos);
    // Clashes are counted against the reference pocket the sample was drawn for.
    Complex placed = reference;
    placed.ligand_pos = s.ligand_pos;
    m.clashes = clash_count(placed, clash_threshold);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < s.num_ligand(); ++i) hit += s.ligand_type[i] == reference.ligand_type[i];
    m.type_accuracy = static_cast<double>(hit) / static_cast<double>(s.num_ligand());
    m.rmsd_pass = m.rmsd < rmsd_cutoff;
    m.clash_free = m.clashes == 0;
    rep.rows.push_back(m);
  }
  const double n = static_cast<double>(rep.rows.size());
  for (const auto& m : rep.rows) {
    rep.rmsd_pass_rate += m.rmsd_pass / n;
    rep.clash_free_rate += m.clash_free / n;
    rep.mean_rmsd += m.rmsd / n;
    rep.mean_type_accuracy += m.type_accuracy / n;
  }
  return rep;
}

std::string format_report(const MetricsReport& rep) {
  std::string out = "sample\trmsd\tclashes\ttype_acc\trmsd_pass\tclash_free\n";
  char buf[256];
  for (const auto& m : rep.rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.6f\t%zu\t%.4f\t%d\t%d\n", m.name.c_str(), m.rmsd, m.clashes,
                  m.type_accuracy, m.rmsd_pass ? 1 : 0, m.clash_free ? 1 : 0);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "# samples\t%zu\n# rmsd_pass_rate\t%.6f\n# clash_free_rate\t%.6f\n# mean_rmsd\t%.6f\n"
                "# mean_type_acc\t%.6f\n",
                rep.rows.size(), rep.rmsd_pass_rate, rep.clash_free_rate, rep.mean_rmsd, rep.mean_type_accuracy);
  out += buf;
  return out;
}

}  // namespace mscod
