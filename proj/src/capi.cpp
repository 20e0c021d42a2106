// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/qedft.h"

#include <exception>
#include <limits>
#include <new>
#include <string>

#include "qedft/error.hpp"
#include "qedft/experiment.hpp"

struct qedft_config {
  qedft::ExperimentConfig cfg;
  std::string method;
};

struct qedft_result {
  nlohmann::json doc;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

qedft_status fail(qedft_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <class F>
qedft_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return QEDFT_OK;
  } catch (const qedft::ConfigError& e) {
    return fail(QEDFT_ERR_CONFIG, e.what());
  } catch (const qedft::Unsupported& e) {
    return fail(QEDFT_ERR_UNSUPPORTED, e.what());
  } catch (const qedft::InvalidArgument& e) {
    return fail(QEDFT_ERR_INVALID_ARGUMENT, e.what());
  } catch (const qedft::SolverError& e) {
    return fail(QEDFT_ERR_SOLVER, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(QEDFT_ERR_CONFIG, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(QEDFT_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(QEDFT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(QEDFT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(QEDFT_ERR_INTERNAL, "unknown error");
  }
}

qedft::RunOptions to_options(const qedft_run_options* o) {
  qedft::RunOptions r;
  if (!o) return r;
  r.workers = o->workers > 0 ? o->workers : 1;
  if (o->has_seed) r.seed = o->seed;
  if (o->output) r.output = std::filesystem::path(o->output);
  return r;
}

qedft_status wrap(const qedft_config* cfg, const qedft_run_options* opts, qedft_result** out, bool scan) {
  if (!cfg || !out) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto* r = new qedft_result;
    try {
      r->doc = scan ? qedft::run_scan(cfg->cfg, to_options(opts)) : qedft::run_experiment(cfg->cfg, to_options(opts));
      r->text = r->doc.dump(2);
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

qedft_status adopt(qedft::ExperimentConfig c, qedft_config** out) {
  auto* h = new qedft_config{std::move(c), {}};
  h->method = qedft::method_name(h->cfg.method);
  *out = h;
  return QEDFT_OK;
}

}  // namespace

extern "C" {

const char* qedft_version(void) { return qedft::kVersion; }

const char* qedft_last_error(void) { return g_last_error.c_str(); }

const char* qedft_status_name(qedft_status s) {
  switch (s) {
    case QEDFT_OK: return "ok";
    case QEDFT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case QEDFT_ERR_CONFIG: return "config error";
    case QEDFT_ERR_UNSUPPORTED: return "unsupported";
    case QEDFT_ERR_SOLVER: return "solver failure";
    case QEDFT_ERR_IO: return "i/o error";
    case QEDFT_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

qedft_status qedft_config_load(const char* path, qedft_config** out) {
  if (!path || !out) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { adopt(qedft::load_config(path), out); });
}

qedft_status qedft_config_parse(const char* json_text, qedft_config** out) {
  if (!json_text || !out) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { adopt(qedft::parse_config(nlohmann::json::parse(json_text, nullptr, true, true)), out); });
}

void qedft_config_free(qedft_config* cfg) { delete cfg; }

const char* qedft_config_method(const qedft_config* cfg) { return cfg ? cfg->method.c_str() : ""; }

int qedft_config_has_scan(const qedft_config* cfg) { return cfg && cfg->cfg.scan ? 1 : 0; }

qedft_status qedft_config_hash(const qedft_config* cfg, char* buf, size_t len) {
  if (!cfg || !buf) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  const std::string h = qedft::config_hash(cfg->cfg.source);
  if (len < h.size() + 1) return fail(QEDFT_ERR_INVALID_ARGUMENT, "buffer too small");
  h.copy(buf, h.size());
  buf[h.size()] = '\0';
  return QEDFT_OK;
}

void qedft_run_options_init(qedft_run_options* opts) {
  if (!opts) return;
  opts->workers = 1;
  opts->has_seed = 0;
  opts->seed = 0;
  opts->output = nullptr;
}

qedft_status qedft_run(const qedft_config* cfg, const qedft_run_options* opts, qedft_result** out) {
  return wrap(cfg, opts, out, false);
}

qedft_status qedft_scan(const qedft_config* cfg, const qedft_run_options* opts, qedft_result** out) {
  return wrap(cfg, opts, out, true);
}

const char* qedft_result_json(const qedft_result* result) { return result ? result->text.c_str() : ""; }

qedft_status qedft_result_number(const qedft_result* result, const char* pointer, double* value) {
  if (!result || !pointer || !value) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const nlohmann::json::json_pointer p(pointer);
    if (!result->doc.contains(p)) throw qedft::InvalidArgument(std::string("no value at ") + pointer);
    const auto& v = result->doc.at(p);
    if (v.is_null()) *value = std::numeric_limits<double>::quiet_NaN();
    else if (v.is_number()) *value = v.get<double>();
    else if (v.is_boolean()) *value = v.get<bool>() ? 1.0 : 0.0;
    else throw qedft::InvalidArgument(std::string("not a number at ") + pointer);
  });
}

void qedft_result_free(qedft_result* result) { delete result; }

qedft_status qedft_parse_quantity(const char* text, const char* dimension, double* value) {
  if (!text || !dimension || !value) return fail(QEDFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *value = qedft::parse_quantity(text, dimension); });
}

}  // extern "C"
