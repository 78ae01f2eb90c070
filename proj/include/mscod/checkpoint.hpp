#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "mscod/bfn.hpp"
#include "mscod/equivariant_net.hpp"
#include "mscod/train.hpp"

namespace mscod {

inline constexpr const char* kCheckpointMagic = "mscod-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Everything needed to resume training or to sample: weights, optimizer
// moments, schedule parameters and the position in the run.
struct Checkpoint {
  ModelWeights weights;
  Adam adam;
  std::size_t steps = 100;  // n
  double sigma1 = 0.03;
  double beta1 = 1.0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;        // completed epochs
  std::uint64_t global_step = 0;  // optimizer steps taken

  NoiseSchedule schedule() const { return schedule_new(steps, sigma1, beta1); }
};

// Line-oriented text, values in shortest round-trip decimal form so a load
// reproduces every bit. See README for the layout.
std::string format_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& text, const std::string& source = "<checkpoint>");

// Writes via a temporary file and rename, so a crash never leaves a torn file.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mscod
