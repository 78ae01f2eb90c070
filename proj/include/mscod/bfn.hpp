#pragma once

// Bayesian-flow generative machinery: accuracy schedules, sender sampling,
// training-time flow states, conjugate belief updates, the closed-form
// losses and the n-step sampler.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mscod/equivariant_net.hpp"
#include "mscod/geomgraph.hpp"
#include "mscod/rng.hpp"
#include "mscod/tensor.hpp"

namespace mscod {

struct NoiseSchedule {
  std::size_t steps = 0;       // n
  double sigma1_coord = 0.0;   // terminal coordinate noise
  double beta1_type = 0.0;     // terminal type accuracy
  std::vector<double> coord_accuracy;  // alpha_i, index i-1
  std::vector<double> type_accuracy;   // alpha'_i, index i-1

  double alpha(std::size_t i) const { return coord_accuracy.at(i - 1); }
  double alpha_type(std::size_t i) const { return type_accuracy.at(i - 1); }
};

// alpha_i = sigma1^(-2i/n) (1 - sigma1^(2/n)),  alpha'_i = beta1 (2i - 1) / n^2.
NoiseSchedule schedule_new(std::size_t steps, double sigma1_coord, double beta1_type);

struct BeliefState {
  std::vector<Vec3> mu;
  double rho = 1.0;
  std::vector<std::vector<double>> type_probs;  // rows on the simplex
  std::size_t step = 0;
  double t = 0.0;

  BeliefInput as_input() const { return {mu, type_probs, t}; }
};

// Uninformed start: mu = 0, rho = 1, uniform type rows.
BeliefState prior_belief(std::size_t num_atoms, int num_types);

struct SenderSample {
  std::vector<Vec3> coords;                   // y_x
  std::vector<std::vector<double>> types;     // y_v
};

// y_x ~ N(x, alpha^-1 I),  y_v ~ N(alpha' (K e_v - 1), alpha' K I).
SenderSample sample_sender(const std::vector<Vec3>& x, const std::vector<int>& types, int num_types,
                           double alpha, double alpha_type, Rng& rng);

// Training-time belief at time t drawn around the ground-truth ligand.
BeliefState flow_state(const std::vector<Vec3>& x, const std::vector<int>& types, int num_types,
                       const NoiseSchedule& sched, double t, Rng& rng);

struct CoordUpdate {
  std::vector<Vec3> mu;
  double rho;
};
CoordUpdate bayes_update_coords(const std::vector<Vec3>& mu, double rho,
                                const std::vector<Vec3>& y, double alpha);

std::vector<std::vector<double>> bayes_update_types(const std::vector<std::vector<double>>& probs,
                                                    const std::vector<std::vector<double>>& y);

// Row softmax of the type logits: the output distribution p_O.
diff::Tensor output_distribution(const diff::Tensor& logits);

// (alpha / 2) * |x - x_hat|^2 summed over atoms.
diff::Tensor loss_coords(const std::vector<Vec3>& x, const diff::Tensor& x_hat, double alpha);

// Single-sample estimate of the type KL: draws y_v from the sender and
// returns ln N(y_v | sender) - sum_d ln sum_k p_O(k) N(y_v^d | alpha'(K e_k - 1), alpha' K I).
// p_O is the row softmax of `logits`.
diff::Tensor loss_types(const std::vector<int>& types, const diff::Tensor& logits, double alpha_type,
                        Rng& rng);
// Same estimate at a caller-supplied y_v.
diff::Tensor loss_types_at(const std::vector<int>& types, const diff::Tensor& logits,
                           double alpha_type, const std::vector<std::vector<double>>& y);

diff::Tensor loss_total(const diff::Tensor& coords_term, const diff::Tensor& types_term);

using Mat3 = std::array<std::array<double, 3>, 3>;

struct SampleOptions {
  // Applied to every coordinate noise vector. Isotropic noise makes the
  // sampled distribution independent of this; it lets a rotated run reuse
  // the same random stream in the rotated frame.
  std::optional<Mat3> noise_frame;
  // Reference ligand for per-step coordinate loss in the trace.
  const std::vector<Vec3>* reference = nullptr;
};

struct SampleTraceRow {
  std::size_t step;
  double t;
  double rho;
  double coord_loss;  // NaN when no reference is supplied
};

struct SampledMolecule {
  std::vector<Vec3> coords;
  std::vector<int> types;
  std::vector<std::vector<double>> type_probs;  // final p_O
  double final_rho = 0.0;
  std::uint64_t seed = 0;
  std::vector<SampleTraceRow> trace;
};

// n-step generation for a centred pocket. Numeric failures are rethrown
// with the step index.
SampledMolecule sample(const Complex& pocket, std::size_t num_atoms, const ModelWeights& weights,
                       const NoiseSchedule& sched, std::uint64_t seed, const SampleOptions& options = {});

}  // namespace mscod
