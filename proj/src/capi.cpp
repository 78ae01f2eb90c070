#include "mscod/mscod.h"

#include <new>
#include <sstream>
#include <string>

#include "mscod/check.hpp"
#include "mscod/dataset.hpp"
#include "mscod/errors.hpp"
#include "mscod/pipeline.hpp"

struct mscod_model {
  mscod::Checkpoint ck;
};

struct mscod_complex {
  mscod::Complex c;
};

namespace {

thread_local std::string last_error;

mscod_status fail(mscod_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

// Runs `body`, translating the exception hierarchy into status codes.
template <typename F>
mscod_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const mscod::NumericError& e) {
    return fail(MSCOD_ERR_NUMERIC, e.what());
  } catch (const mscod::ConfigError& e) {
    return fail(MSCOD_ERR_USAGE, e.what());
  } catch (const mscod::FormatError& e) {
    return fail(MSCOD_ERR_FORMAT, e.what());
  } catch (const mscod::IoError& e) {
    return fail(MSCOD_ERR_IO, e.what());
  } catch (const mscod::DimensionError& e) {
    return fail(MSCOD_ERR_DIMENSION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MSCOD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MSCOD_ERR_INTERNAL, e.what());
  }
}

mscod::LineSink sink_for(mscod_line_fn line, void* user) {
  if (!line) return {};
  return [line, user](const std::string& s) { line(s.c_str(), user); };
}

}  // namespace

extern "C" {

const char* mscod_version(void) { return "0.1.0"; }

const char* mscod_last_error(void) { return last_error.c_str(); }

const char* mscod_config_help(void) {
  static const std::string help = mscod::config_help();
  return help.c_str();
}

mscod_status mscod_gen_data(const char* config_path, mscod_line_fn line, void* user) {
  if (!config_path) return fail(MSCOD_ERR_USAGE, "config path is required");
  return guarded([&] {
    mscod::gen_data(mscod::load_config(config_path), sink_for(line, user));
    return MSCOD_OK;
  });
}

mscod_status mscod_train(const char* config_path, mscod_line_fn line, void* user) {
  if (!config_path) return fail(MSCOD_ERR_USAGE, "config path is required");
  return guarded([&] {
    mscod::train_run(mscod::load_config(config_path), sink_for(line, user));
    return MSCOD_OK;
  });
}

mscod_status mscod_model_load(const char* checkpoint_path, mscod_model** out) {
  if (!checkpoint_path || !out) return fail(MSCOD_ERR_USAGE, "checkpoint path and output handle are required");
  *out = nullptr;
  return guarded([&] {
    auto* m = new mscod_model{mscod::load_checkpoint(checkpoint_path)};
    *out = m;
    return MSCOD_OK;
  });
}

void mscod_model_free(mscod_model* model) { delete model; }

size_t mscod_model_hidden_dim(const mscod_model* m) { return m ? m->ck.weights.config().hidden_dim : 0; }
size_t mscod_model_layers(const mscod_model* m) { return m ? m->ck.weights.config().layers : 0; }
size_t mscod_model_heads(const mscod_model* m) { return m ? m->ck.weights.config().heads : 0; }
size_t mscod_model_attention_blocks(const mscod_model* m) { return m ? m->ck.weights.mhca.size() : 0; }

mscod_status mscod_complex_read(const char* path, mscod_complex** out) {
  if (!path || !out) return fail(MSCOD_ERR_USAGE, "path and output handle are required");
  *out = nullptr;
  return guarded([&] {
    *out = new mscod_complex{mscod::read_complex(path)};
    return MSCOD_OK;
  });
}

void mscod_complex_free(mscod_complex* c) { delete c; }

size_t mscod_complex_num_protein(const mscod_complex* c) { return c ? c->c.num_protein() : 0; }
size_t mscod_complex_num_ligand(const mscod_complex* c) { return c ? c->c.num_ligand() : 0; }

mscod_status mscod_complex_ligand(const mscod_complex* c, double* xyz, int* types) {
  if (!c) return fail(MSCOD_ERR_USAGE, "complex handle is null");
  for (size_t i = 0; i < c->c.num_ligand(); ++i) {
    if (xyz)
      for (int a = 0; a < 3; ++a) xyz[3 * i + static_cast<size_t>(a)] = c->c.ligand_pos[i][static_cast<size_t>(a)];
    if (types) types[i] = c->c.ligand_type[i];
  }
  return MSCOD_OK;
}

mscod_status mscod_sample(const mscod_model* model, const mscod_complex* pocket, size_t n_atoms, size_t count,
                          uint64_t seed, size_t threads, const char* out_dir, int write_trace, mscod_line_fn line,
                          void* user) {
  if (!model || !pocket || !out_dir) return fail(MSCOD_ERR_USAGE, "model, pocket and output directory are required");
  return guarded([&] {
    mscod::SampleRunOptions o;
    o.num_atoms = n_atoms;
    o.count = count;
    o.seed = seed;
    o.threads = threads;
    o.out_dir = out_dir;
    o.write_trace = write_trace != 0;
    mscod::sample_run(model->ck, pocket->c, o, sink_for(line, user));
    return MSCOD_OK;
  });
}

mscod_status mscod_eval(const char* samples_dir, const mscod_complex* reference, double rmsd_cutoff,
                        double clash_threshold, mscod_line_fn line, void* user, double* rmsd_pass_rate,
                        double* clash_free_rate) {
  if (!samples_dir || !reference) return fail(MSCOD_ERR_USAGE, "samples directory and reference are required");
  return guarded([&] {
    const mscod::MetricsReport rep = mscod::eval_run(samples_dir, reference->c, rmsd_cutoff, clash_threshold);
    if (line) {
      std::istringstream in(mscod::format_report(rep));
      for (std::string l; std::getline(in, l);) line(l.c_str(), user);
    }
    if (rmsd_pass_rate) *rmsd_pass_rate = rep.rmsd_pass_rate;
    if (clash_free_rate) *clash_free_rate = rep.clash_free_rate;
    return MSCOD_OK;
  });
}

mscod_status mscod_check(const char* level, mscod_line_fn line, void* user) {
  const std::string lv = level ? level : "quick";
  if (lv != "quick" && lv != "full") return fail(MSCOD_ERR_USAGE, "check level must be 'quick' or 'full'");
  return guarded([&] {
    const auto results =
        mscod::check::run_all(lv == "full" ? mscod::check::Level::kFull : mscod::check::Level::kQuick,
                              sink_for(line, user));
    std::size_t failed = 0;
    for (const auto& r : results) failed += !r.passed;
    if (line) {
      const std::string summary = std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) +
                                  " suites passed";
      line(summary.c_str(), user);
    }
    if (failed) return fail(MSCOD_ERR_CHECK, std::to_string(failed) + " property suite(s) failed");
    return MSCOD_OK;
  });
}

mscod_status mscod_attention_map(const mscod_model* model, const mscod_complex* c, size_t block, size_t head,
                                 double t, double* out, size_t capacity, size_t* rows, size_t* cols) {
  if (!model || !c) return fail(MSCOD_ERR_USAGE, "model and complex are required");
  return guarded([&] {
    const auto a = mscod::attention_dump(model->ck, c->c, block, head, t);
    const size_t r = a.size(), k = a.empty() ? 0 : a[0].size();
    if (rows) *rows = r;
    if (cols) *cols = k;
    if (!out || capacity < r * k)
      return fail(MSCOD_ERR_DIMENSION, "attention buffer holds " + std::to_string(capacity) + " values, need " +
                                           std::to_string(r * k));
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < k; ++j) out[i * k + j] = a[i][j];
    return MSCOD_OK;
  });
}

}  // extern "C"
