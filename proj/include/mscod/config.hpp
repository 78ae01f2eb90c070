#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mscod/bfn.hpp"
#include "mscod/dataset.hpp"
#include "mscod/equivariant_net.hpp"
#include "mscod/train.hpp"

namespace mscod {

struct TrainConfig {
  std::filesystem::path out_dir = "run";
  std::size_t epochs = 25;
  std::size_t batch_size = 4;
  double lr = 0.005;
  double grad_clip = 10.0;
  double train_fraction = 0.8;
  bool resume = true;
};

// Everything a pipeline run reads from its `key = value` file. `seed` has no
// default and must be present.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path data_dir = "data";
  std::filesystem::path manifest;  // empty: <data_dir>/manifest.txt
  DatasetSpec data;
  ModelConfig model;
  std::size_t steps = 100;  // n
  double sigma1 = 0.03;
  double beta1 = 1.0;
  TrainConfig train;

  std::filesystem::path manifest_path() const {
    return manifest.empty() ? data_dir / "manifest.txt" : manifest;
  }
  NoiseSchedule schedule() const { return schedule_new(steps, sigma1, beta1); }
};

struct ConfigKey {
  std::string name;
  std::string default_value;  // "(required)" for seed
  std::string help;
};

// All recognised keys in documentation order.
const std::vector<ConfigKey>& config_keys();

// Parses flat `key = value` lines; '#' starts a comment. Unknown keys,
// duplicate keys, malformed values and a missing `seed` are ConfigErrors.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Text listing every key with its default, for --help.
std::string config_help();

}  // namespace mscod
