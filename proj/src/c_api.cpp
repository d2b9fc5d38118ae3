#include "micas/micas_c.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "micas/cloud_io.hpp"
#include "micas/error.hpp"
#include "micas/nn.hpp"
#include "micas/pipeline.hpp"

struct micas_config {
  micas::RunConfig cfg;
};

struct micas_cloud {
  micas::PointCloud cloud;
};

namespace {

thread_local std::string g_last_error;

micas_status to_status(micas::ErrorKind kind) {
  switch (kind) {
    case micas::ErrorKind::Domain: return MICAS_ERR_DOMAIN;
    case micas::ErrorKind::Contract: return MICAS_ERR_CONTRACT;
    case micas::ErrorKind::Numeric: return MICAS_ERR_NUMERIC;
    case micas::ErrorKind::Configuration: return MICAS_ERR_CONFIG;
    case micas::ErrorKind::Io: return MICAS_ERR_IO;
    case micas::ErrorKind::Format: return MICAS_ERR_FORMAT;
  }
  return MICAS_ERR_INTERNAL;
}

micas_status invalid(const char* what) {
  g_last_error = what;
  return MICAS_ERR_INVALID_ARGUMENT;
}

template <typename Fn>
micas_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MICAS_OK;
  } catch (const micas::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MICAS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MICAS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return MICAS_ERR_INTERNAL;
  }
}

void copy_out(const std::string& text, char* buffer, size_t capacity, size_t* needed) {
  if (needed) *needed = text.size();
  if (buffer && capacity > 0) {
    const size_t n = std::min(capacity - 1, text.size());
    std::memcpy(buffer, text.data(), n);
    buffer[n] = '\0';
  }
}

void report_epochs(const std::vector<micas::EpochRecord>& epochs, micas_epoch_callback cb, void* user) {
  if (!cb) return;
  for (const auto& e : epochs) {
    const micas_epoch rec{static_cast<long>(e.epoch), e.lr, e.tau, e.mean_loss};
    cb(user, &rec);
  }
}

}  // namespace

extern "C" {

const char* micas_last_error(void) { return g_last_error.c_str(); }

const char* micas_status_name(micas_status status) {
  switch (status) {
    case MICAS_OK: return "ok";
    case MICAS_ERR_DOMAIN: return "domain error";
    case MICAS_ERR_CONTRACT: return "contract violation";
    case MICAS_ERR_NUMERIC: return "numeric error";
    case MICAS_ERR_CONFIG: return "configuration error";
    case MICAS_ERR_IO: return "i/o error";
    case MICAS_ERR_FORMAT: return "format error";
    case MICAS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MICAS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* micas_version(void) { return "0.1.0"; }

micas_status micas_config_create(const char* profile, micas_config** out) {
  if (!out) return invalid("output handle is null");
  *out = nullptr;
  return guarded([&] {
    auto cfg = micas::RunConfig::for_profile(profile ? profile : "desk");
    *out = new micas_config{std::move(cfg)};
  });
}

micas_status micas_config_load(const char* path, micas_config** out) {
  if (!path || !out) return invalid("path or output handle is null");
  *out = nullptr;
  return guarded([&] { *out = new micas_config{micas::RunConfig::load(path)}; });
}

micas_status micas_config_set(micas_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return invalid("null config, key or value");
  return guarded([&] {
    if (std::string_view(key) == "profile") {
      // switching profile resets to that profile's defaults, keeping the seed
      const auto seed = cfg->cfg.seed;
      cfg->cfg = micas::RunConfig::for_profile(value);
      cfg->cfg.seed = seed;
    } else {
      cfg->cfg.set(key, value);
    }
  });
}

micas_status micas_config_get(const micas_config* cfg, const char* key, char* buffer, size_t capacity,
                              size_t* needed) {
  if (!cfg || !key) return invalid("null config or key");
  return guarded([&] { copy_out(cfg->cfg.get(key), buffer, capacity, needed); });
}

micas_status micas_config_serialize(const micas_config* cfg, char* buffer, size_t capacity, size_t* needed) {
  if (!cfg) return invalid("null config");
  return guarded([&] { copy_out(cfg->cfg.serialize(), buffer, capacity, needed); });
}

micas_status micas_config_hash(const micas_config* cfg, uint64_t* out) {
  if (!cfg || !out) return invalid("null config or output");
  return guarded([&] { *out = cfg->cfg.hash(); });
}

micas_status micas_config_validate(const micas_config* cfg) {
  if (!cfg) return invalid("null config");
  return guarded([&] { cfg->cfg.validate(); });
}

void micas_config_destroy(micas_config* cfg) { delete cfg; }

micas_status micas_cloud_create(const double* xyz, size_t count, micas_cloud** out) {
  if (!out || (!xyz && count > 0)) return invalid("null points or output handle");
  *out = nullptr;
  return guarded([&] {
    micas::PointCloud c;
    c.points.resize(static_cast<micas::Index>(count), 3);
    for (size_t i = 0; i < count; ++i)
      for (int k = 0; k < 3; ++k) c.points(static_cast<micas::Index>(i), k) = xyz[3 * i + static_cast<size_t>(k)];
    c.validate();
    *out = new micas_cloud{std::move(c)};
  });
}

micas_status micas_cloud_load(const char* path, micas_cloud** out) {
  if (!path || !out) return invalid("null path or output handle");
  *out = nullptr;
  return guarded([&] {
    const std::filesystem::path p(path);
    auto c = p.extension() == ".xyz" ? micas::import_xyz(p) : micas::load_cloud(p);
    *out = new micas_cloud{std::move(c)};
  });
}

micas_status micas_cloud_save(const micas_cloud* cloud, const char* path) {
  if (!cloud || !path) return invalid("null cloud or path");
  return guarded([&] { micas::save_cloud(path, cloud->cloud); });
}

micas_status micas_cloud_size(const micas_cloud* cloud, size_t* out) {
  if (!cloud || !out) return invalid("null cloud or output");
  *out = static_cast<size_t>(cloud->cloud.size());
  g_last_error.clear();
  return MICAS_OK;
}

micas_status micas_cloud_points(const micas_cloud* cloud, double* xyz, size_t capacity) {
  if (!cloud || !xyz) return invalid("null cloud or output");
  const size_t n = static_cast<size_t>(cloud->cloud.size());
  if (capacity < 3 * n) return invalid("output buffer smaller than 3 * size");
  for (size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) xyz[3 * i + static_cast<size_t>(k)] = cloud->cloud.points(static_cast<micas::Index>(i), k);
  g_last_error.clear();
  return MICAS_OK;
}

void micas_cloud_destroy(micas_cloud* cloud) { delete cloud; }

micas_status micas_chamfer(const micas_cloud* a, const micas_cloud* b, double* out) {
  if (!a || !b || !out) return invalid("null cloud or output");
  return guarded([&] { *out = micas::chamfer_distance(a->cloud.points, b->cloud.points); });
}

micas_status micas_fps(const micas_cloud* cloud, size_t count, size_t* indices) {
  if (!cloud || (!indices && count > 0)) return invalid("null cloud or output");
  return guarded([&] {
    const auto idx = micas::fps_select(cloud->cloud, static_cast<micas::Index>(count), 0);
    for (size_t i = 0; i < idx.size(); ++i) indices[i] = static_cast<size_t>(idx[i]);
  });
}

micas_status micas_gen_data(const micas_config* cfg, const char* run_dir) {
  if (!cfg || !run_dir) return invalid("null config or run directory");
  return guarded([&] { micas::cmd_gen_data(cfg->cfg, {run_dir}); });
}

micas_status micas_train_sampler(const micas_config* cfg, const char* run_dir, micas_epoch_callback on_epoch,
                                 void* user, uint64_t* params_hash) {
  if (!cfg || !run_dir) return invalid("null config or run directory");
  return guarded([&] {
    const auto run = micas::cmd_train_sampler(cfg->cfg, {run_dir});
    report_epochs(run.epochs, on_epoch, user);
    if (params_hash) *params_hash = run.params_hash;
  });
}

micas_status micas_train_ranker(const micas_config* cfg, const char* run_dir, micas_epoch_callback on_epoch,
                                void* user, micas_ranker_summary* summary) {
  if (!cfg || !run_dir) return invalid("null config or run directory");
  return guarded([&] {
    const auto run = micas::cmd_train_ranker(cfg->cfg, {run_dir});
    report_epochs(run.epochs, on_epoch, user);
    if (summary) {
      summary->sampler_hash_before = run.sampler_hash_before;
      summary->sampler_hash_after = run.sampler_hash_after;
      summary->params_hash = run.params_hash;
      summary->label_cache_reused = run.cache_reused ? 1 : 0;
      summary->heldout_spearman = run.heldout_spearman;
    }
  });
}

micas_status micas_eval(const micas_config* cfg, const char* run_dir, const char* const* ablations,
                        size_t ablation_count) {
  if (!cfg || !run_dir || (!ablations && ablation_count > 0)) return invalid("null config, directory or ablations");
  return guarded([&] {
    std::vector<std::string> specs;
    for (size_t i = 0; i < ablation_count; ++i) {
      if (!ablations[i]) throw micas::Error(micas::ErrorKind::Configuration, "null ablation entry");
      specs.emplace_back(ablations[i]);
    }
    micas::cmd_eval(cfg->cfg, {run_dir}, micas::parse_variants(specs));
  });
}

micas_status micas_report(const char* run_dir, char* buffer, size_t capacity, size_t* needed) {
  if (!run_dir) return invalid("null run directory");
  return guarded([&] { copy_out(micas::cmd_report({run_dir}), buffer, capacity, needed); });
}

micas_status micas_params_file_hash(const char* path, uint64_t* out) {
  if (!path || !out) return invalid("null path or output");
  return guarded([&] { *out = micas::ad::load_params(path).hash(); });
}

}  // extern "C"
