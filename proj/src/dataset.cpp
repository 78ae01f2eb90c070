#include "mscod/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mscod/errors.hpp"
#include "mscod/rng.hpp"

namespace mscod {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  if (count == 0) throw ConfigError("dataset: count must be >= 1");
  if (pocket_min < 1 || pocket_min > pocket_max) throw ConfigError("dataset: empty pocket atom range");
  if (ligand_min < 1 || ligand_min > ligand_max) throw ConfigError("dataset: empty ligand atom range");
  if (!(ligand_spread > 0.0) || !(shell_radius > ligand_spread))
    throw ConfigError("dataset: need shell_radius > ligand_spread > 0");
  if (protein_types < 1 || ligand_types < 1) throw ConfigError("dataset: type vocabularies must be >= 1");
}

namespace {

using Mat = std::array<Vec3, 3>;

// Uniform rotation from a normalised Gaussian quaternion.
Mat random_rotation(Rng& rng) {
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& v : q) {
      v = rng.normal();
      n2 += v * v;
    }
  } while (n2 < 1e-12);
  const double s = 1.0 / std::sqrt(n2);
  const double w = q[0] * s, x = q[1] * s, y = q[2] * s, z = q[3] * s;
  return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

Vec3 apply(const Mat& r, const Vec3& v, const Vec3& shift) {
  Vec3 out{};
  for (int a = 0; a < 3; ++a) out[a] = r[a][0] * v[0] + r[a][1] * v[1] + r[a][2] * v[2] + shift[a];
  return out;
}

bool far_enough(const Vec3& p, const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  for (const auto& q : a)
    if (pairwise_distance(p, q) < kMinAtomSeparation) return false;
  for (const auto& q : b)
    if (pairwise_distance(p, q) < kMinAtomSeparation) return false;
  return true;
}

constexpr int kMaxAttempts = 10000;

}  // namespace

Complex generate_complex(const DatasetSpec& spec, std::size_t index) {
  spec.validate();
  if (index >= spec.count) throw ConfigError("generate_complex: index outside dataset");
  Rng rng(derive_seed(spec.seed, "data", index));

  const std::size_t np = spec.pocket_min + rng.uniform_int(spec.pocket_max - spec.pocket_min + 1);
  const std::size_t nm = spec.ligand_min + rng.uniform_int(spec.ligand_max - spec.ligand_min + 1);

  Complex c;
  char name[32];
  std::snprintf(name, sizeof name, "complex_%05zu", index);
  c.name = name;
  c.protein_types = spec.protein_types;
  c.ligand_types = spec.ligand_types;

  // Local frame: cavity centre at the origin, shell opening toward -z.
  std::vector<Vec3> pocket, ligand;
  const std::vector<Vec3> none;
  for (std::size_t i = 0; i < np; ++i) {
    int tries = 0;
    for (;; ++tries) {
      if (tries == kMaxAttempts) throw ConfigError("generate_complex: pocket shell too crowded");
      Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
      const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      if (len < 1e-9) continue;
      const double r = spec.shell_radius + rng.uniform(-0.3, 0.3);
      Vec3 p{dir[0] / len * r, dir[1] / len * r, std::abs(dir[2]) / len * r};
      if (!far_enough(p, pocket, none)) continue;
      pocket.push_back(p);
      c.protein_type.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.protein_types))));
      break;
    }
  }

  // The ligand ball leans 0.5 A toward the type-0 pocket atoms.
  Vec3 anchor{0.0, 0.0, 0.0};
  Vec3 pull{0.0, 0.0, 0.0};
  std::size_t n0 = 0;
  for (std::size_t i = 0; i < np; ++i) {
    if (c.protein_type[i] != 0) continue;
    for (int a = 0; a < 3; ++a) pull[a] += pocket[i][a];
    ++n0;
  }
  const double pull_len = std::sqrt(pull[0] * pull[0] + pull[1] * pull[1] + pull[2] * pull[2]);
  if (n0 > 0 && pull_len > 1e-9)
    for (int a = 0; a < 3; ++a) anchor[a] = 0.5 * pull[a] / pull_len;

  for (std::size_t i = 0; i < nm; ++i) {
    int tries = 0;
    for (;; ++tries) {
      if (tries == kMaxAttempts) throw ConfigError("generate_complex: ligand ball too crowded");
      Vec3 u{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      if (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0) continue;
      Vec3 p{};
      for (int a = 0; a < 3; ++a) p[a] = anchor[a] + spec.ligand_spread * u[a];
      if (!far_enough(p, pocket, ligand)) continue;
      ligand.push_back(p);
      break;
    }
  }
  for (const auto& p : ligand) {
    std::size_t best = 0;
    double best_d = pairwise_distance(p, pocket[0]);
    for (std::size_t j = 1; j < np; ++j) {
      const double d = pairwise_distance(p, pocket[j]);
      if (d < best_d) best_d = d, best = j;
    }
    c.ligand_type.push_back(c.protein_type[best] % spec.ligand_types);
  }

  const Mat rot = random_rotation(rng);
  const Vec3 shift{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
  for (const auto& p : pocket) c.protein_pos.push_back(apply(rot, p, shift));
  for (const auto& p : ligand) c.ligand_pos.push_back(apply(rot, p, shift));
  return c;
}

std::string format_complex(const Complex& c) {
  c.validate();
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "complex %s %zu %zu %d %d\n", c.name.c_str(), c.num_protein(),
                c.num_ligand(), c.protein_types, c.ligand_types);
  out += buf;
  auto rows = [&](char tag, const std::vector<Vec3>& pos, const std::vector<int>& types) {
    for (std::size_t i = 0; i < pos.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%c %.17g %.17g %.17g %d\n", tag, pos[i][0], pos[i][1], pos[i][2], types[i]);
      out += buf;
    }
  };
  rows('P', c.protein_pos, c.protein_type);
  rows('L', c.ligand_pos, c.ligand_type);
  return out;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

Complex parse_complex(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> FormatError {
    return FormatError(source + ":" + std::to_string(lineno) + ": " + msg);
  };

  std::vector<std::string> head;
  while (head.empty() && std::getline(in, line)) {
    ++lineno;
    head = split_ws(line);
  }
  if (head.empty()) throw FormatError(source + ": empty complex file");
  Complex c;
  std::size_t np = 0, nm = 0;
  if (head.size() != 6 || head[0] != "complex" || !parse_number(head[2], np) || !parse_number(head[3], nm) ||
      !parse_number(head[4], c.protein_types) || !parse_number(head[5], c.ligand_types))
    throw fail("expected 'complex <name> <N_P> <N_M> <D_P> <K>'");
  c.name = head[1];
  if (nm < 1) throw fail("N_M must be ≥ 1");
  if (np < 1) throw fail("N_P must be ≥ 1");
  if (c.protein_types < 1 || c.ligand_types < 1) throw fail("type vocabularies must be >= 1");

  std::size_t seen_p = 0, seen_l = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    const bool is_p = tok[0] == "P";
    if (!is_p && tok[0] != "L") throw fail("unknown record '" + tok[0] + "'");
    if (is_p && seen_l > 0) throw fail("protein row after ligand rows");
    const std::size_t row = is_p ? seen_p : seen_l;
    const std::string what = std::string(is_p ? "protein" : "ligand") + " row " + std::to_string(row);
    if ((is_p && seen_p == np) || (!is_p && seen_l == nm)) throw fail("more " + std::string(is_p ? "P" : "L") + " rows than declared");
    if (tok.size() < 5) throw fail(what + ": expected x y z type");
    Vec3 p{};
    for (int a = 0; a < 3; ++a)
      if (!parse_number(tok[1 + a], p[a])) throw fail(what + ": bad coordinate '" + tok[1 + a] + "'");
    const int vocab = is_p ? c.protein_types : c.ligand_types;
    int type = -1;
    if (tok.size() == 5) {
      if (!parse_number(tok[4], type) || type < 0 || type >= vocab)
        throw fail(what + ": type '" + tok[4] + "' outside [0, " + std::to_string(vocab) + ")");
    } else {
      if (tok.size() != 4 + static_cast<std::size_t>(vocab))
        throw fail(what + ": one-hot type row must have " + std::to_string(vocab) + " entries");
      int ones = 0;
      for (int k = 0; k < vocab; ++k) {
        int v = 0;
        if (!parse_number(tok[4 + k], v) || (v != 0 && v != 1)) throw fail(what + ": one-hot entries must be 0 or 1");
        if (v == 1) ++ones, type = k;
      }
      if (ones != 1) throw fail(what + ": type row is not one-hot (" + std::to_string(ones) + " ones)");
    }
    if (is_p) {
      c.protein_pos.push_back(p), c.protein_type.push_back(type), ++seen_p;
    } else {
      c.ligand_pos.push_back(p), c.ligand_type.push_back(type), ++seen_l;
    }
  }
  if (seen_p != np || seen_l != nm)
    throw fail("declared " + std::to_string(np) + " P / " + std::to_string(nm) + " L rows, found " +
               std::to_string(seen_p) + " / " + std::to_string(seen_l));
  c.validate();
  return c;
}

void write_complex(const Complex& c, const fs::path& path) {
  const std::string text = format_complex(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Complex read_complex(const fs::path& path) { return parse_complex(slurp(path), path.string()); }

void write_manifest(const std::vector<fs::path>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : entries) out << e.generic_string() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<fs::path> read_manifest(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::vector<fs::path> out;
  const fs::path base = path.parent_path();
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    fs::path p(line);
    out.push_back(p.is_absolute() ? p : base / p);
  }
  if (out.empty()) throw FormatError(path.string() + ": manifest lists no complexes");
  return out;
}

std::vector<Complex> load_dataset(const fs::path& manifest) {
  std::vector<Complex> out;
  for (const auto& p : read_manifest(manifest)) out.push_back(read_complex(p));
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& v, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < v.size(); i += size)
    out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(i),
                     v.begin() + static_cast<std::ptrdiff_t>(std::min(v.size(), i + size)));
  return out;
}

}  // namespace

DatasetSplit split_and_batch(std::size_t n, double fraction, std::size_t batch_size, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split: train fraction must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("split: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  DatasetSplit out;
  out.train_batches = chunk(std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)), batch_size);
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(const DatasetSplit& split, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("split: batch size must be >= 1");
  std::vector<std::size_t> items;
  for (const auto& b : split.train_batches) items.insert(items.end(), b.begin(), b.end());
  if (epoch > 0) {
    Rng rng(derive_seed(seed, "epoch", epoch));
    shuffle(items, rng);
  }
  return chunk(items, batch_size);
}

}  // namespace mscod
