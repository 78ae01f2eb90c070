#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mscod/checkpoint.hpp"
#include "mscod/config.hpp"
#include "mscod/metrics.hpp"

namespace mscod {

// Receives human-readable progress lines (no trailing newline).
using LineSink = std::function<void(const std::string&)>;

struct GenDataResult {
  std::vector<std::filesystem::path> files;
  std::filesystem::path manifest;
};

// Writes <data_dir>/complex_NNNNN.txt and <data_dir>/manifest.txt.
GenDataResult gen_data(const RunConfig& cfg, const LineSink& sink = {});

struct TrainRunResult {
  std::size_t epochs_completed = 0;
  std::uint64_t global_step = 0;
  double last_loss = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

// Trains from the manifest, checkpointing after every epoch to
// <out_dir>/checkpoint.txt and appending one row per step to
// <out_dir>/loss.tsv. With `resume`, an existing checkpoint is picked up and
// the log is cut back to the checkpointed step, so the continued trace equals
// an uninterrupted run. A non-finite loss raises NumericError naming the step.
TrainRunResult train_run(const RunConfig& cfg, const LineSink& sink = {});

// Per-step log columns.
inline constexpr const char* kLossLogHeader = "step\tepoch\tbatch\tloss\tcoord_loss\ttype_loss\tgrad_norm";

struct SampleRunOptions {
  std::size_t num_atoms = 0;  // must be >= 1
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path out_dir = "samples";
  bool write_trace = false;  // sample_NNNN.trace.tsv next to each molecule
};

// Generates `count` ligands for the pocket of `pocket_file` (its ligand rows,
// if any, only serve as the trace reference). Molecule i uses the stream
// derive_seed(seed, "sample", i); outputs are in the pocket's own frame.
std::vector<std::filesystem::path> sample_run(const Checkpoint& ck, const Complex& pocket_file,
                                              const SampleRunOptions& options, const LineSink& sink = {});

// Reads every sample_*.txt in `dir` (sorted) and scores it against the
// reference ligand.
MetricsReport eval_run(const std::filesystem::path& dir, const Complex& reference,
                       double rmsd_cutoff = kDefaultRmsdCutoff, double clash_threshold = kDefaultClashThreshold);

// Attention of one MHCA head in one block with the complex's own ligand as
// the belief mean (one-hot types) at time t. Rows: protein atoms; columns:
// ligand atoms; each column sums to 1.
std::vector<std::vector<double>> attention_dump(const Checkpoint& ck, const Complex& c, std::size_t block,
                                                std::size_t head, double t);

}  // namespace mscod
