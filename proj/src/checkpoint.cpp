#include "mscod/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "mscod/errors.hpp"

namespace mscod {

namespace fs = std::filesystem;

namespace {

void put(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void put_row(std::string& out, const char* tag, std::span<const double> values) {
  out += tag;
  for (double v : values) {
    out += ' ';
    put(out, v);
  }
  out += '\n';
}

// Model settings as name/value pairs; order is the on-disk order.
std::vector<std::pair<std::string, std::string>> model_fields(const ModelConfig& m) {
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  auto d = [](double v) {
    std::string s;
    put(s, v);
    return s;
  };
  std::string ratios;
  for (std::size_t i = 0; i < m.ratios.size(); ++i) ratios += (i ? "," : "") + d(m.ratios[i]);
  return {{"hidden_dim", std::to_string(m.hidden_dim)},
          {"heads", std::to_string(m.heads)},
          {"layers", std::to_string(m.layers)},
          {"knn_k", std::to_string(m.knn_k)},
          {"protein_types", std::to_string(m.protein_types)},
          {"ligand_types", std::to_string(m.ligand_types)},
          {"ratios", ratios},
          {"use_msib", b(m.use_msib)},
          {"use_mhca", b(m.use_mhca)},
          {"enhance_every_layer", b(m.enhance_every_layer)},
          {"attention_messages", b(m.attention_messages)},
          {"use_rbf", b(m.use_rbf)},
          {"shared_gate", b(m.shared_gate)},
          {"rbf_count", std::to_string(m.rbf_count)},
          {"rbf_max", d(m.rbf_max)},
          {"rbf_width", d(m.rbf_width)},
          {"time_frequencies", std::to_string(m.time_frequencies)},
          {"max_coord_step", d(m.max_coord_step)}};
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : in_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(source_ + ": line " + std::to_string(lineno_) + ": " + msg + " (expected " +
                      kCheckpointMagic + " version " + std::to_string(kCheckpointVersion) + ")");
  }

  // Next non-empty line split into tokens; fails at end of input.
  std::vector<std::string> next(const char* expect) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      std::vector<std::string> tok;
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\r')) ++i;
        const std::size_t s = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\r') ++i;
        if (i > s) tok.emplace_back(line, s, i - s);
      }
      if (tok.empty()) continue;
      if (expect && tok[0] != expect) fail("expected '" + std::string(expect) + "', found '" + tok[0] + "'");
      return tok;
    }
    fail(std::string("truncated file, expected '") + (expect ? expect : "record") + "'");
  }

  template <typename T>
  T number(const std::string& s) const {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  std::vector<double> row(const char* tag, std::size_t count) {
    auto tok = next(tag);
    if (tok.size() != count + 1)
      fail(std::string(tag) + " row has " + std::to_string(tok.size() - 1) + " values, expected " + std::to_string(count));
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = number<double>(tok[i + 1]);
    return v;
  }

 private:
  std::istringstream in_;
  std::string source_;
  std::size_t lineno_ = 0;
};

}  // namespace

std::string format_checkpoint(const Checkpoint& ck) {
  std::string out;
  out += std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += "meta seed " + std::to_string(ck.seed) + "\n";
  out += "meta epoch " + std::to_string(ck.epoch) + "\n";
  out += "meta global_step " + std::to_string(ck.global_step) + "\n";
  out += "schedule " + std::to_string(ck.steps) + " ";
  put(out, ck.sigma1);
  out += " ";
  put(out, ck.beta1);
  out += "\n";
  for (const auto& [k, v] : model_fields(ck.weights.config())) out += "model " + k + " " + v + "\n";
  const auto& a = ck.adam.config();
  out += "adam ";
  put(out, a.lr);
  out += " ";
  put(out, a.beta1);
  out += " ";
  put(out, a.beta2);
  out += " ";
  put(out, a.eps);
  out += " " + std::to_string(ck.adam.steps()) + "\n";

  const auto& entries = ck.weights.registry().entries();
  const auto& m = ck.adam.first_moment();
  const auto& v = ck.adam.second_moment();
  const bool moments = m.size() == entries.size();
  out += "tensors " + std::to_string(entries.size()) + "\n";
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const auto& t = entries[p].tensor;
    out += "tensor " + entries[p].name + " " + std::to_string(t.rank());
    for (std::size_t dim : t.shape()) out += " " + std::to_string(dim);
    out += "\n";
    put_row(out, "w", t.values());
    const std::vector<double> zeros(moments ? 0 : t.size(), 0.0);
    put_row(out, "m", moments ? std::span<const double>(m[p]) : std::span<const double>(zeros));
    put_row(out, "v", moments ? std::span<const double>(v[p]) : std::span<const double>(zeros));
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& text, const std::string& source) {
  Reader r(text, source);
  auto head = r.next(kCheckpointMagic);
  if (head.size() != 2) r.fail("malformed header");
  if (r.number<int>(head[1]) != kCheckpointVersion) r.fail("unsupported version " + head[1]);

  Checkpoint ck;
  auto meta = [&](const char* key) {
    auto tok = r.next("meta");
    if (tok.size() != 3 || tok[1] != key) r.fail(std::string("expected 'meta ") + key + " <value>'");
    return r.number<std::uint64_t>(tok[2]);
  };
  ck.seed = meta("seed");
  ck.epoch = meta("epoch");
  ck.global_step = meta("global_step");
  auto sched = r.next("schedule");
  if (sched.size() != 4) r.fail("expected 'schedule <n> <sigma1> <beta1>'");
  ck.steps = r.number<std::size_t>(sched[1]);
  ck.sigma1 = r.number<double>(sched[2]);
  ck.beta1 = r.number<double>(sched[3]);

  ModelConfig mc;
  for (const auto& [key, unused] : model_fields(mc)) {
    (void)unused;
    auto tok = r.next("model");
    if (tok.size() != 3 || tok[1] != key) r.fail("expected 'model " + key + " <value>'");
    const std::string& v = tok[2];
    if (key == "hidden_dim") mc.hidden_dim = r.number<std::size_t>(v);
    else if (key == "heads") mc.heads = r.number<std::size_t>(v);
    else if (key == "layers") mc.layers = r.number<std::size_t>(v);
    else if (key == "knn_k") mc.knn_k = r.number<std::size_t>(v);
    else if (key == "protein_types") mc.protein_types = r.number<int>(v);
    else if (key == "ligand_types") mc.ligand_types = r.number<int>(v);
    else if (key == "ratios") {
      mc.ratios.clear();
      std::size_t s = 0;
      while (s <= v.size()) {
        const auto e = std::min(v.find(',', s), v.size());
        mc.ratios.push_back(r.number<double>(v.substr(s, e - s)));
        s = e + 1;
      }
    } else if (key == "use_msib") mc.use_msib = r.number<int>(v) != 0;
    else if (key == "use_mhca") mc.use_mhca = r.number<int>(v) != 0;
    else if (key == "enhance_every_layer") mc.enhance_every_layer = r.number<int>(v) != 0;
    else if (key == "attention_messages") mc.attention_messages = r.number<int>(v) != 0;
    else if (key == "use_rbf") mc.use_rbf = r.number<int>(v) != 0;
    else if (key == "shared_gate") mc.shared_gate = r.number<int>(v) != 0;
    else if (key == "rbf_count") mc.rbf_count = r.number<std::size_t>(v);
    else if (key == "rbf_max") mc.rbf_max = r.number<double>(v);
    else if (key == "rbf_width") mc.rbf_width = r.number<double>(v);
    else if (key == "time_frequencies") mc.time_frequencies = r.number<std::size_t>(v);
    else if (key == "max_coord_step") mc.max_coord_step = r.number<double>(v);
  }
  try {
    mc.validate();
    schedule_new(ck.steps, ck.sigma1, ck.beta1);
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid settings: ") + e.what());
  }

  auto adam = r.next("adam");
  if (adam.size() != 6) r.fail("expected 'adam <lr> <beta1> <beta2> <eps> <steps>'");
  AdamConfig ac{r.number<double>(adam[1]), r.number<double>(adam[2]), r.number<double>(adam[3]),
                r.number<double>(adam[4])};
  const auto adam_steps = r.number<std::uint64_t>(adam[5]);

  auto count_tok = r.next("tensors");
  if (count_tok.size() != 2) r.fail("expected 'tensors <count>'");
  const auto count = r.number<std::size_t>(count_tok[1]);
  nn::ParamRegistry loaded;
  std::vector<std::vector<double>> m, v;
  for (std::size_t p = 0; p < count; ++p) {
    auto tok = r.next("tensor");
    if (tok.size() < 3) r.fail("expected 'tensor <path> <rank> <dims...>'");
    const auto rank = r.number<std::size_t>(tok[2]);
    if (tok.size() != 3 + rank) r.fail("tensor " + tok[1] + ": rank and dimension count disagree");
    diff::Shape shape;
    for (std::size_t k = 0; k < rank; ++k) shape.push_back(r.number<std::size_t>(tok[3 + k]));
    const std::size_t n = diff::numel(shape);
    auto values = r.row("w", n);
    try {
      loaded.add(tok[1], diff::Tensor(shape, std::move(values)));
    } catch (const Error& e) {
      r.fail(e.what());
    }
    m.push_back(r.row("m", n));
    v.push_back(r.row("v", n));
  }
  r.next("end");

  try {
    ck.weights = ModelWeights::from_registry(mc, loaded);
  } catch (const Error& e) {
    r.fail(std::string("weights do not match the model settings: ") + e.what());
  }
  ck.adam = Adam(ck.weights.registry(), ac);
  ck.adam.set_steps(adam_steps);
  // Registry order is fixed by the model, so moments can be matched by path.
  const auto& entries = ck.weights.registry().entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    std::size_t src = 0;
    while (loaded.entries()[src].name != entries[p].name) ++src;
    ck.adam.first_moment()[p] = m[src];
    ck.adam.second_moment()[p] = v[src];
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  const std::string text = format_checkpoint(ck);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

}  // namespace mscod
