// mscod command-line front end. Everything goes through the C API.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mscod/mscod.h"

namespace {

void print_line(const char* line, void*) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

void collect_line(const char* line, void* user) {
  static_cast<std::vector<std::string>*>(user)->emplace_back(line);
}

// 0 success, 1 usage/other, 2 numeric failure, 3 check failure.
int exit_code(mscod_status s) {
  if (s == MSCOD_OK) return 0;
  std::fprintf(stderr, "mscod: error: %s\n", mscod_last_error());
  if (s == MSCOD_ERR_NUMERIC) return 2;
  if (s == MSCOD_ERR_CHECK) return 3;
  return 1;
}

struct ComplexHandle {
  mscod_complex* p = nullptr;
  ~ComplexHandle() { mscod_complex_free(p); }
};
struct ModelHandle {
  mscod_model* p = nullptr;
  ~ModelHandle() { mscod_model_free(p); }
};

int write_lines(const std::vector<std::string>& lines, const std::string& path) {
  if (path.empty()) {
    for (const auto& l : lines) print_line(l.c_str(), nullptr);
    return 0;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  if (!out) {
    std::fprintf(stderr, "mscod: error: cannot write %s\n", path.c_str());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pocket-conditioned 3D ligand generation (Bayesian flow, equivariant network)"};
  app.require_subcommand(1);
  app.footer(std::string("\n") + mscod_config_help());
  app.set_version_flag("--version", mscod_version());

  std::string config;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset described by a config");
  gen->add_option("-c,--config", config, "config file")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "train from a config; checkpoints every epoch, resumable");
  train->add_option("-c,--config", config, "config file")->required()->check(CLI::ExistingFile);

  std::string checkpoint, pocket, out_dir = "samples";
  long long n_atoms = -1;
  std::size_t count = 1, threads = 1;
  std::uint64_t seed = 0;
  bool trace = false;
  auto* sample = app.add_subcommand("sample", "sample ligands for a pocket");
  sample->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  sample->add_option("--pocket", pocket, "complex file providing the pocket")->required();
  sample->add_option("--n-atoms", n_atoms, "ligand atoms to generate (default: the file's ligand size)");
  sample->add_option("--count", count, "molecules to write")->capture_default_str();
  sample->add_option("--seed", seed, "sampling seed")->capture_default_str();
  sample->add_option("--threads", threads, "parallel molecules")->capture_default_str();
  sample->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
  sample->add_flag("--trace", trace, "also write per-step traces");

  std::string samples_dir, reference, report;
  double cutoff = 2.0, clash = 2.0;
  auto* eval = app.add_subcommand("eval", "score samples against a reference complex");
  eval->add_option("--samples", samples_dir, "directory of sample_*.txt")->required();
  eval->add_option("--reference", reference, "reference complex file")->required();
  eval->add_option("--rmsd-cutoff", cutoff, "RMSD pass threshold, Angstrom")->capture_default_str();
  eval->add_option("--clash-threshold", clash, "clash distance, Angstrom")->capture_default_str();
  eval->add_option("-o,--out", report, "report file (default: stdout)");

  std::string level = "quick";
  auto* check = app.add_subcommand("check", "run the property suites");
  check->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}))->capture_default_str();

  std::string complex_file;
  std::size_t block = 0, head = 0;
  double t = 1.0;
  auto* attn = app.add_subcommand("attention", "dump one cross-attention head as a protein x ligand matrix");
  attn->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  attn->add_option("--complex", complex_file, "complex file (its ligand is used as the belief)")->required();
  attn->add_option("--block", block, "attention block")->capture_default_str();
  attn->add_option("--head", head, "head index")->capture_default_str();
  attn->add_option("--t", t, "flow time in [0, 1]")->capture_default_str();
  attn->add_option("-o,--out", report, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (gen->parsed()) return exit_code(mscod_gen_data(config.c_str(), print_line, nullptr));
  if (train->parsed()) return exit_code(mscod_train(config.c_str(), print_line, nullptr));
  if (check->parsed()) return exit_code(mscod_check(level.c_str(), print_line, nullptr));

  if (sample->parsed()) {
    ModelHandle model;
    ComplexHandle pc;
    if (mscod_status s = mscod_model_load(checkpoint.c_str(), &model.p)) return exit_code(s);
    if (mscod_status s = mscod_complex_read(pocket.c_str(), &pc.p)) return exit_code(s);
    if (n_atoms < 0) n_atoms = static_cast<long long>(mscod_complex_num_ligand(pc.p));
    return exit_code(mscod_sample(model.p, pc.p, static_cast<size_t>(n_atoms), count, seed, threads, out_dir.c_str(),
                                  trace ? 1 : 0, print_line, nullptr));
  }

  if (eval->parsed()) {
    ComplexHandle ref;
    if (mscod_status s = mscod_complex_read(reference.c_str(), &ref.p)) return exit_code(s);
    std::vector<std::string> lines;
    if (mscod_status s = mscod_eval(samples_dir.c_str(), ref.p, cutoff, clash, collect_line, &lines, nullptr, nullptr))
      return exit_code(s);
    return write_lines(lines, report);
  }

  if (attn->parsed()) {
    ModelHandle model;
    ComplexHandle c;
    if (mscod_status s = mscod_model_load(checkpoint.c_str(), &model.p)) return exit_code(s);
    if (mscod_status s = mscod_complex_read(complex_file.c_str(), &c.p)) return exit_code(s);
    size_t rows = 0, cols = 0;
    std::vector<double> buf(mscod_complex_num_protein(c.p) * mscod_complex_num_ligand(c.p));
    if (mscod_status s = mscod_attention_map(model.p, c.p, block, head, t, buf.data(), buf.size(), &rows, &cols))
      return exit_code(s);
    std::vector<std::string> lines;
    char num[40];
    for (size_t i = 0; i < rows; ++i) {
      std::string l;
      for (size_t j = 0; j < cols; ++j) {
        std::snprintf(num, sizeof num, "%.17g", buf[i * cols + j]);
        l += (j ? "\t" : "") + std::string(num);
      }
      lines.push_back(std::move(l));
    }
    return write_lines(lines, report);
  }
  return 1;
}
