#include "mscod/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mscod/dataset.hpp"
#include "mscod/errors.hpp"

namespace mscod {

namespace fs = std::filesystem;

namespace {

void emit(const LineSink& sink, const std::string& line) {
  if (sink) sink(line);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// Runs body(i) for i in [0, n) on up to `threads` workers; the first
// exception (lowest index) is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t k) {
    for (std::size_t i = k; i < n; i += threads) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(run, k);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same_model(const ModelConfig& a, const ModelConfig& b) {
  return a.hidden_dim == b.hidden_dim && a.heads == b.heads && a.layers == b.layers && a.knn_k == b.knn_k &&
         a.protein_types == b.protein_types && a.ligand_types == b.ligand_types && a.ratios == b.ratios &&
         a.use_msib == b.use_msib && a.use_mhca == b.use_mhca && a.enhance_every_layer == b.enhance_every_layer &&
         a.attention_messages == b.attention_messages && a.use_rbf == b.use_rbf && a.shared_gate == b.shared_gate &&
         a.rbf_count == b.rbf_count && a.rbf_max == b.rbf_max && a.rbf_width == b.rbf_width &&
         a.time_frequencies == b.time_frequencies && a.max_coord_step == b.max_coord_step;
}

// Keeps the header and the first `rows` data rows of an existing log.
void truncate_log(const fs::path& path, std::uint64_t rows) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    if (in && std::getline(in, line) && line == kLossLogHeader) {
      while (kept.size() < rows && std::getline(in, line)) kept.push_back(line);
    }
  }
  if (kept.size() != rows)
    throw FormatError("loss log " + path.string() + " has fewer rows than the checkpoint's " + std::to_string(rows) +
                      " steps");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kLossLogHeader << '\n';
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

GenDataResult gen_data(const RunConfig& cfg, const LineSink& sink) {
  cfg.data.validate();
  ensure_dir(cfg.data_dir);
  GenDataResult res;
  std::vector<fs::path> names(cfg.data.count);
  std::atomic<std::size_t> ligand_atoms{0}, pocket_atoms{0};
  parallel_for(cfg.data.count, cfg.threads, [&](std::size_t i) {
    const Complex c = generate_complex(cfg.data, i);
    names[i] = c.name + ".txt";
    write_complex(c, cfg.data_dir / names[i]);
    ligand_atoms += c.num_ligand();
    pocket_atoms += c.num_protein();
  });
  res.manifest = cfg.data_dir / "manifest.txt";
  write_manifest(names, res.manifest);
  for (const auto& n : names) res.files.push_back(cfg.data_dir / n);
  emit(sink, "wrote " + std::to_string(cfg.data.count) + " complexes (" + std::to_string(pocket_atoms.load()) +
                 " pocket atoms, " + std::to_string(ligand_atoms.load()) + " ligand atoms) to " +
                 cfg.data_dir.string());
  emit(sink, "manifest: " + res.manifest.string());
  return res;
}

TrainRunResult train_run(const RunConfig& cfg, const LineSink& sink) {
  const NoiseSchedule sched = cfg.schedule();
  std::vector<Complex> data = load_dataset(cfg.manifest_path());
  for (auto& c : data) {
    if (c.protein_types != cfg.model.protein_types || c.ligand_types != cfg.model.ligand_types)
      throw ConfigError("complex '" + c.name + "' vocabularies differ from the model's protein_types/ligand_types");
    c = center_by_protein_com(c);
  }
  if (data.size() < 2) throw ConfigError("training needs at least two complexes for a train/test split");
  const DatasetSplit split =
      split_and_batch(data.size(), cfg.train.train_fraction, cfg.train.batch_size, derive_seed(cfg.seed, "train", 0));
  if (split.train_batches.empty()) throw ConfigError("train_fraction leaves no training complexes");

  ensure_dir(cfg.train.out_dir);
  TrainRunResult res;
  res.checkpoint = cfg.train.out_dir / "checkpoint.txt";
  res.loss_log = cfg.train.out_dir / "loss.tsv";

  Checkpoint ck;
  if (cfg.train.resume && fs::exists(res.checkpoint)) {
    ck = load_checkpoint(res.checkpoint);
    if (!same_model(ck.weights.config(), cfg.model) || ck.steps != cfg.steps || ck.sigma1 != cfg.sigma1 ||
        ck.beta1 != cfg.beta1 || ck.seed != cfg.seed)
      throw ConfigError("checkpoint " + res.checkpoint.string() + " was written with different settings");
    ck.adam.config().lr = cfg.train.lr;
    truncate_log(res.loss_log, ck.global_step);
    emit(sink, "resuming from epoch " + std::to_string(ck.epoch) + ", step " + std::to_string(ck.global_step));
  } else {
    ck.weights = ModelWeights::random(cfg.model, derive_seed(cfg.seed, "init"));
    ck.adam = Adam(ck.weights.registry(), AdamConfig{cfg.train.lr});
    ck.steps = cfg.steps;
    ck.sigma1 = cfg.sigma1;
    ck.beta1 = cfg.beta1;
    ck.seed = cfg.seed;
    std::ofstream log(res.loss_log, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + res.loss_log.string());
    log << kLossLogHeader << '\n';
    // The test split is recorded for later evaluation, in manifest form
    // (relative to the manifest directory) so runs stay relocatable.
    std::ofstream test(cfg.train.out_dir / "test_split.txt", std::ios::binary | std::ios::trunc);
    const auto files = read_manifest(cfg.manifest_path());
    const fs::path base = cfg.manifest_path().parent_path();
    for (std::size_t i : split.test) test << files[i].lexically_relative(base).generic_string() << '\n';
  }

  std::ofstream log(res.loss_log, std::ios::binary | std::ios::app);
  if (!log) throw IoError("cannot append to " + res.loss_log.string());
  const TrainStepOptions opts{cfg.train.grad_clip, cfg.threads};

  for (std::size_t epoch = ck.epoch; epoch < cfg.train.epochs; ++epoch) {
    const auto batches = epoch_batches(split, cfg.train.batch_size, derive_seed(cfg.seed, "train", 1), epoch);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Complex> batch;
      for (std::size_t i : batches[b]) batch.push_back(data[i]);
      const std::uint64_t step = ck.global_step + 1;
      TrainStepResult r;
      try {
        r = train_step(batch, ck.weights, sched, ck.adam, derive_seed(cfg.seed, "train", 1 + step), opts);
      } catch (const NumericError& e) {
        throw NumericError("training step " + std::to_string(step) + " (epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(b + 1) + "): " + e.what());
      }
      ck.global_step = step;
      epoch_loss += r.loss;
      res.last_loss = r.loss;
      log << step << '\t' << epoch + 1 << '\t' << b + 1 << '\t' << fmt_double(r.loss) << '\t'
          << fmt_double(r.coord_loss) << '\t' << fmt_double(r.type_loss) << '\t' << fmt_double(r.grad_norm) << '\n';
      log.flush();
    }
    ck.epoch = epoch + 1;
    save_checkpoint(ck, res.checkpoint);
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu: mean loss %.6g over %zu steps (step %llu)", epoch + 1,
                  cfg.train.epochs, epoch_loss / static_cast<double>(batches.size()), batches.size(),
                  static_cast<unsigned long long>(ck.global_step));
    emit(sink, buf);
  }
  if (!fs::exists(res.checkpoint)) save_checkpoint(ck, res.checkpoint);
  res.epochs_completed = ck.epoch;
  res.global_step = ck.global_step;
  return res;
}

std::vector<fs::path> sample_run(const Checkpoint& ck, const Complex& pocket_file, const SampleRunOptions& options,
                                 const LineSink& sink) {
  if (options.num_atoms < 1) throw ConfigError("sample: N_M must be ≥ 1");
  if (options.count < 1) throw ConfigError("sample: count must be >= 1");
  const ModelConfig& mc = ck.weights.config();
  if (pocket_file.protein_types != mc.protein_types)
    throw ConfigError("pocket type vocabulary differs from the model's");
  const NoiseSchedule sched = ck.schedule();
  const Vec3 com = protein_center_of_mass(pocket_file);
  const Complex centred = center_by_protein_com(pocket_file);
  const bool has_ref = centred.num_ligand() == options.num_atoms;
  ensure_dir(options.out_dir);

  std::vector<fs::path> paths(options.count);
  // Each worker samples with its own copy of the weights.
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, options.count));
  std::vector<ModelWeights> copies;
  for (std::size_t k = 1; k < threads; ++k) copies.push_back(ck.weights.clone());
  std::vector<std::exception_ptr> errors(options.count);
  auto work = [&](std::size_t k) {
    const ModelWeights& w = k == 0 ? ck.weights : copies[k - 1];
    for (std::size_t i = k; i < options.count; i += threads) {
      try {
        SampleOptions so;
        if (has_ref) so.reference = &centred.ligand_pos;
        SampledMolecule m = sample(centred, options.num_atoms, w, sched, derive_seed(options.seed, "sample", i), so);
        Complex out = pocket_file;
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu", i);
        out.name = name;
        out.ligand_types = mc.ligand_types;
        out.ligand_pos = m.coords;
        for (auto& p : out.ligand_pos)
          for (int a = 0; a < 3; ++a) p[a] += com[a];
        out.ligand_type = m.types;
        paths[i] = options.out_dir / (std::string(name) + ".txt");
        write_complex(out, paths[i]);
        if (options.write_trace) {
          std::ofstream tr(options.out_dir / (std::string(name) + ".trace.tsv"), std::ios::binary | std::ios::trunc);
          tr << "step\tt\trho\tcoord_loss\n";
          for (const auto& row : m.trace)
            tr << row.step << '\t' << fmt_double(row.t) << '\t' << fmt_double(row.rho) << '\t'
               << fmt_double(row.coord_loss) << '\n';
          if (!tr) throw IoError("cannot write trace for " + std::string(name));
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work, k);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericError& e) {
      throw NumericError("molecule " + std::to_string(i) + ": " + e.what());
    }
  }
  emit(sink, "wrote " + std::to_string(options.count) + " molecules of " + std::to_string(options.num_atoms) +
                 " atoms to " + options.out_dir.string());
  return paths;
}

MetricsReport eval_run(const fs::path& dir, const Complex& reference, double rmsd_cutoff, double clash_threshold) {
  if (!fs::is_directory(dir)) throw IoError("samples directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("sample_", 0) == 0 && e.path().extension() == ".txt") files.push_back(e.path());
  }
  if (files.empty()) throw ConfigError("no samples in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<Complex> samples;
  for (const auto& f : files) {
    samples.push_back(read_complex(f));
    samples.back().name = f.stem().string();  // rows are keyed by file
  }
  return evaluate_samples(samples, reference, rmsd_cutoff, clash_threshold);
}

std::vector<std::vector<double>> attention_dump(const Checkpoint& ck, const Complex& c, std::size_t block,
                                                std::size_t head, double t) {
  const ModelWeights& w = ck.weights;
  const ModelConfig& mc = w.config();
  if (!mc.use_mhca) throw ConfigError("attention: model was trained without cross-attention");
  if (block >= w.mhca.size())
    throw ConfigError("attention: block " + std::to_string(block) + " outside [0, " + std::to_string(w.mhca.size()) + ")");
  if (head >= mc.heads) throw ConfigError("attention: head " + std::to_string(head) + " outside [0, " + std::to_string(mc.heads) + ")");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("attention: t must lie in [0, 1]");
  if (c.ligand_types != mc.ligand_types || c.protein_types != mc.protein_types)
    throw ConfigError("attention: complex vocabularies differ from the model's");
  const Complex centred = center_by_protein_com(c);
  BeliefInput belief;
  belief.mu = centred.ligand_pos;
  belief.t = t;
  for (int ty : centred.ligand_type) {
    std::vector<double> row(static_cast<std::size_t>(mc.ligand_types), 0.0);
    row[static_cast<std::size_t>(ty)] = 1.0;
    belief.type_probs.push_back(std::move(row));
  }
  diff::NoGradGuard guard;
  std::vector<MhcaBlockInput> inputs;
  backbone_forward(centred, belief, w, &inputs);
  const diff::Tensor a = attention_map(inputs.at(block).protein, inputs.at(block).ligand, w.mhca[block], head);
  std::vector<std::vector<double>> out(a.dim(0), std::vector<double>(a.dim(1)));
  auto v = a.values();
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out[i][j] = v[i * a.dim(1) + j];
  return out;
}

}  // namespace mscod
