#include "mscod/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mscod/errors.hpp"

namespace mscod {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_as(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string show(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the short form when it round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MSCOD_KEY(NAME, FIELD, TYPE, HELP)                                                    \
  Entry {                                                                                    \
    {NAME, "", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_as<TYPE>(NAME, v); }, \
        [](const RunConfig& c) { return show(c.FIELD); }                                     \
  }
#define MSCOD_FLAG(NAME, FIELD, HELP)                                                          \
  Entry {                                                                                     \
    {NAME, "", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); }, \
        [](const RunConfig& c) { return show(c.FIELD); }                                      \
  }
#define MSCOD_PATH(NAME, FIELD, HELP)                                                \
  Entry {                                                                           \
    {NAME, "", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = v; },      \
        [](const RunConfig& c) { return c.FIELD.string(); }                         \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t{
        {{"seed", "", "root seed; data/train/sample streams derive from it"},
         [](RunConfig& c, const std::string& v) { c.seed = parse_as<std::uint64_t>("seed", v); },
         [](const RunConfig&) { return std::string("(required)"); }},
        MSCOD_KEY("threads", threads, std::size_t, "worker threads for batch items"),
        MSCOD_PATH("data_dir", data_dir, "dataset directory written by gen-data"),
        MSCOD_PATH("manifest", manifest, "dataset manifest read by train (empty: <data_dir>/manifest.txt)"),
        MSCOD_KEY("count", data.count, std::size_t, "number of synthetic complexes"),
        MSCOD_KEY("pocket_min", data.pocket_min, std::size_t, "fewest pocket atoms"),
        MSCOD_KEY("pocket_max", data.pocket_max, std::size_t, "most pocket atoms"),
        MSCOD_KEY("ligand_min", data.ligand_min, std::size_t, "fewest ligand atoms"),
        MSCOD_KEY("ligand_max", data.ligand_max, std::size_t, "most ligand atoms"),
        MSCOD_KEY("shell_radius", data.shell_radius, double, "pocket shell radius, Angstrom"),
        MSCOD_KEY("ligand_spread", data.ligand_spread, double, "ligand ball radius, Angstrom"),
        {{"protein_types", "", "pocket type vocabulary D_P"},
         [](RunConfig& c, const std::string& v) { c.data.protein_types = c.model.protein_types = parse_as<int>("protein_types", v); },
         [](const RunConfig& c) { return show(c.model.protein_types); }},
        {{"ligand_types", "", "ligand type vocabulary K"},
         [](RunConfig& c, const std::string& v) { c.data.ligand_types = c.model.ligand_types = parse_as<int>("ligand_types", v); },
         [](const RunConfig& c) { return show(c.model.ligand_types); }},
        MSCOD_KEY("hidden_dim", model.hidden_dim, std::size_t, "hidden width d"),
        MSCOD_KEY("heads", model.heads, std::size_t, "cross-attention heads H (must divide d)"),
        MSCOD_KEY("layers", model.layers, std::size_t, "equivariant layers L"),
        MSCOD_KEY("knn_k", model.knn_k, std::size_t, "neighbours per atom"),
        {{"ratios", "", "bottleneck compression ratios, comma separated"},
         [](RunConfig& c, const std::string& v) {
           c.model.ratios.clear();
           std::stringstream ss(v);
           for (std::string part; std::getline(ss, part, ',');) c.model.ratios.push_back(parse_as<double>("ratios", trim(part)));
           if (c.model.ratios.empty()) throw ConfigError("config key 'ratios': empty list");
         },
         [](const RunConfig& c) {
           std::string s;
           for (std::size_t i = 0; i < c.model.ratios.size(); ++i) s += (i ? "," : "") + show(c.model.ratios[i]);
           return s;
         }},
        MSCOD_FLAG("use_msib", model.use_msib, "enable the multi-scale bottleneck"),
        MSCOD_FLAG("use_mhca", model.use_mhca, "enable protein-to-ligand cross-attention"),
        MSCOD_FLAG("enhance_every_layer", model.enhance_every_layer, "bottleneck/attention after every layer (false: once)"),
        MSCOD_FLAG("attention_messages", model.attention_messages, "attention-weighted messages (false: plain sums)"),
        MSCOD_FLAG("use_rbf", model.use_rbf, "radial basis distance features (false: raw distance)"),
        MSCOD_FLAG("shared_gate", model.shared_gate, "one gate projection shared by all heads"),
        MSCOD_KEY("rbf_count", model.rbf_count, std::size_t, "radial basis functions"),
        MSCOD_KEY("rbf_max", model.rbf_max, double, "last radial centre, Angstrom"),
        MSCOD_KEY("rbf_width", model.rbf_width, double, "radial basis width, Angstrom"),
        MSCOD_KEY("time_frequencies", model.time_frequencies, std::size_t, "sinusoidal time frequencies"),
        MSCOD_KEY("max_coord_step", model.max_coord_step, double, "per-layer coordinate step clip, Angstrom"),
        MSCOD_KEY("steps", steps, std::size_t, "discrete flow steps n"),
        MSCOD_KEY("sigma1", sigma1, double, "terminal coordinate noise"),
        MSCOD_KEY("beta1", beta1, double, "terminal type accuracy"),
        MSCOD_PATH("out_dir", train.out_dir, "training output directory (checkpoint, loss log)"),
        MSCOD_KEY("epochs", train.epochs, std::size_t, "training epochs"),
        MSCOD_KEY("batch_size", train.batch_size, std::size_t, "complexes per optimizer step"),
        MSCOD_KEY("lr", train.lr, double, "Adam learning rate"),
        MSCOD_KEY("grad_clip", train.grad_clip, double, "global gradient-norm clip (0 disables)"),
        MSCOD_KEY("train_fraction", train.train_fraction, double, "fraction of complexes used for training"),
        MSCOD_FLAG("resume", train.resume, "continue from an existing checkpoint in out_dir"),
    };
    const RunConfig defaults;
    for (auto& e : t)
      if (e.key.name != "seed") e.key.default_value = e.get(defaults);
      else e.key.default_value = "(required)";
    return t;
  }();
  return table;
}

#undef MSCOD_KEY
#undef MSCOD_FLAG
#undef MSCOD_PATH

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::string, const Entry*> by_name;
  for (const auto& e : entries()) by_name[e.key.name] = &e;
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError(where + ": unknown config key '" + key + "'");
    if (seen.count(key)) throw ConfigError(where + ": duplicate config key '" + key + "'");
    seen[key] = lineno;
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (!seen.count("seed")) throw ConfigError(source + ": missing required config key 'seed'");
  cfg.data.seed = cfg.seed;
  cfg.data.validate();
  cfg.model.validate();
  if (cfg.steps < 1) throw ConfigError(source + ": steps must be >= 1");
  if (!(cfg.sigma1 > 0.0 && cfg.sigma1 < 1.0)) throw ConfigError(source + ": sigma1 must lie in (0, 1)");
  if (!(cfg.beta1 > 0.0)) throw ConfigError(source + ": beta1 must be positive");
  if (cfg.train.batch_size < 1) throw ConfigError(source + ": batch_size must be >= 1");
  if (!(cfg.train.lr >= 0.0)) throw ConfigError(source + ": lr must be >= 0");
  if (!(cfg.train.train_fraction > 0.0 && cfg.train.train_fraction < 1.0))
    throw ConfigError(source + ": train_fraction must lie in (0, 1)");
  if (cfg.threads < 1) throw ConfigError(source + ": threads must be >= 1");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_help() {
  std::string out = "Config keys (key = value, '#' comments; unknown keys are errors):\n";
  char buf[256];
  for (const auto& k : config_keys()) {
    std::snprintf(buf, sizeof buf, "  %-20s %-14s %s\n", k.name.c_str(), k.default_value.c_str(), k.help.c_str());
    out += buf;
  }
  return out;
}

}  // namespace mscod
