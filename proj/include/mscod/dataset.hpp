#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mscod/geomgraph.hpp"

namespace mscod {

// Synthetic pocket/ligand generator settings.
struct DatasetSpec {
  std::size_t count = 64;
  std::uint64_t seed = 0;
  std::size_t pocket_min = 24, pocket_max = 40;
  std::size_t ligand_min = 4, ligand_max = 8;
  double shell_radius = 6.0;   // pocket atoms sit on a hemisphere of this radius
  double ligand_spread = 1.5;  // ligand atoms fill a ball of this radius
  int protein_types = 4;       // D_P
  int ligand_types = 6;        // K

  void validate() const;  // throws ConfigError
};

inline constexpr double kMinAtomSeparation = 0.8;

// Pure function of (spec.seed, index). Pocket: jittered hemispherical shell,
// randomly oriented, uniform types. Ligand: a ball inside the cavity whose
// centre leans toward the pocket atoms of type 0; each ligand atom takes the
// type of its nearest pocket atom (mod K). All pairs are >= 0.8 A apart.
Complex generate_complex(const DatasetSpec& spec, std::size_t index);

// Text format:
//   complex <name> <N_P> <N_M> <D_P> <K>
//   P <x> <y> <z> <type>     (N_P lines)
//   L <x> <y> <z> <type>     (N_M lines)
// Coordinates use 17 significant digits. On read, the type may also be given
// as a one-hot row of length D_P (resp. K).
std::string format_complex(const Complex& c);
Complex parse_complex(const std::string& text, const std::string& source = "<string>");
void write_complex(const Complex& c, const std::filesystem::path& path);
Complex read_complex(const std::filesystem::path& path);

// One path per line; relative entries resolve against the manifest directory.
void write_manifest(const std::vector<std::filesystem::path>& entries, const std::filesystem::path& path);
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);
std::vector<Complex> load_dataset(const std::filesystem::path& manifest);

struct DatasetSplit {
  std::vector<std::vector<std::size_t>> train_batches;  // indices into the dataset
  std::vector<std::size_t> test;
};

// Deterministic shuffle, round(fraction * n) training items, fixed-size
// batches with the last partial batch kept.
DatasetSplit split_and_batch(std::size_t dataset_size, double train_fraction, std::size_t batch_size,
                             std::uint64_t seed);

// Per-epoch reshuffle of the training items into batches.
std::vector<std::vector<std::size_t>> epoch_batches(const DatasetSplit& split, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

}  // namespace mscod
