#pragma once

// Property suites shared by `mscod check`, the C API and the acceptance run.
// Each suite compares the implementation against an independent oracle:
// transformed inputs, central differences, Monte Carlo, or exact sums.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mscod/equivariant_net.hpp"
#include "mscod/geomgraph.hpp"
#include "mscod/rng.hpp"

namespace mscod::check {

using Mat3 = std::array<Vec3, 3>;

// Uniform-ish rotation: QR (Gram-Schmidt) of a Gaussian matrix, det forced to +1.
Mat3 random_rotation(Rng& rng);

// Random centred complex with `np` protein and `nm` ligand atoms.
Complex random_complex(Rng& rng, std::size_t np, std::size_t nm, int protein_types, int ligand_types);

struct EquivarianceReport {
  double max_coord_dev = 0.0;   // |f(Rx+t) - (R f(x) + t)|
  double max_logit_dev = 0.0;
  double max_hidden_dev = 0.0;
  std::size_t cases = 0;
};
EquivarianceReport equivariance(const ModelConfig& cfg, std::size_t complexes, std::size_t transforms,
                                std::uint64_t seed);

struct GradientReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t tensors = 0;
  std::size_t probes = 0;
};
// Full loss on a 4-protein / 2-ligand instance; every registered tensor is
// probed (max_probes = 0) or subsampled.
GradientReport gradients(const ModelConfig& cfg, std::uint64_t seed, std::size_t max_probes = 0,
                         double eps = 1e-5);

struct MhcaReport {
  double max_column_sum_dev = 0.0;
  bool protein_unchanged = true;    // H_p_final bit-identical under ligand perturbation
  double max_context_excess = 0.0;  // how far C_h leaves the per-column hull of P_h (<= 0 inside)
  std::size_t trials = 0;
};
MhcaReport mhca_structure(std::size_t d, std::size_t heads, std::size_t trials, std::uint64_t seed);

struct MsibReport {
  bool identity_exact = true;
  std::vector<std::size_t> widths_d128;
  std::size_t trials = 0;
};
MsibReport msib_identity(std::size_t d, std::size_t trials, std::uint64_t seed);

struct ScheduleReport {
  double max_coord_rel_err = 0.0;  // |1 + sum alpha - sigma1^-2| / sigma1^-2
  double max_type_abs_err = 0.0;   // |sum alpha' - beta1|
  double sampled_rho_rel_err = 0.0;
};
ScheduleReport schedule_telescoping(const std::vector<std::size_t>& step_counts, double sigma1, double beta1,
                                    const ModelConfig& cfg, std::uint64_t seed);

struct LossReport {
  double max_coord_mc_rel_err = 0.0;  // closed form vs Monte Carlo KL
  double onehot_mean = 0.0, onehot_sigma = 0.0;  // worst |mean| / its standard error
  double min_other_z = 0.0;  // smallest mean / standard error for non-one-hot outputs
  bool passed = false;
};
LossReport loss_oracles(std::size_t configs, std::size_t samples, std::uint64_t seed);

struct SuiteResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

enum class Level { kQuick, kFull };

// Runs every suite, reporting one line per suite through `line`.
std::vector<SuiteResult> run_all(Level level, const std::function<void(const std::string&)>& line = {});

}  // namespace mscod::check
