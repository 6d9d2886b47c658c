#include "covomix.h"

#include <new>
#include <string>

#include "covomix/config.hpp"
#include "covomix/errors.hpp"
#include "covomix/pipeline.hpp"

struct covomix_ctx {
  covomix::cfg::RunConfig config;
  std::string last_error;
  std::string scratch;  // backs covomix_config_get
};

namespace {

using CommandFn = int (*)(const covomix::cfg::RunConfig&);

covomix_status run_command(covomix_ctx* ctx, CommandFn fn) {
  if (!ctx) return COVOMIX_ERR_USAGE;
  ctx->last_error.clear();
  try {
    const int code = fn(ctx->config);
    if (code != 0) {
      ctx->last_error = "command finished with exit code " + std::to_string(code);
    }
    return static_cast<covomix_status>(code);
  } catch (const covomix::UsageError& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_USAGE;
  } catch (const covomix::NumericError& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_NUMERIC;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_DATA;
  }
}

}  // namespace

extern "C" {

const char* covomix_version(void) { return "0.1.0"; }

covomix_ctx* covomix_create(void) { return new (std::nothrow) covomix_ctx(); }

void covomix_destroy(covomix_ctx* ctx) { delete ctx; }

const char* covomix_last_error(const covomix_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

covomix_status covomix_config_set(covomix_ctx* ctx, const char* key, const char* value) {
  if (!ctx) return COVOMIX_ERR_USAGE;
  ctx->last_error.clear();
  if (!key || !value) {
    ctx->last_error = "config_set: null key or value";
    return COVOMIX_ERR_USAGE;
  }
  try {
    ctx->config.set(key, value);
    return COVOMIX_OK;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_USAGE;
  }
}

const char* covomix_config_get(covomix_ctx* ctx, const char* key) {
  if (!ctx || !key) return nullptr;
  if (!ctx->config.has(key)) return nullptr;
  ctx->scratch = ctx->config.get_str(key);
  return ctx->scratch.c_str();
}

covomix_status covomix_config_load(covomix_ctx* ctx, const char* path) {
  if (!ctx) return COVOMIX_ERR_USAGE;
  ctx->last_error.clear();
  if (!path) {
    ctx->last_error = "config_load: null path";
    return COVOMIX_ERR_USAGE;
  }
  try {
    // loaded keys merge over existing ones
    const covomix::cfg::RunConfig loaded = covomix::cfg::RunConfig::parse_file(path);
    for (const auto& [k, v] : loaded.all()) ctx->config.set(k, v);
    return COVOMIX_OK;
  } catch (const covomix::UsageError& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_USAGE;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_DATA;
  }
}

covomix_status covomix_config_dump(covomix_ctx* ctx, const char* path) {
  if (!ctx) return COVOMIX_ERR_USAGE;
  ctx->last_error.clear();
  if (!path) {
    ctx->last_error = "config_dump: null path";
    return COVOMIX_ERR_USAGE;
  }
  try {
    ctx->config.dump_file(path);
    return COVOMIX_OK;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return COVOMIX_ERR_DATA;
  }
}

covomix_status covomix_prepare(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_prepare);
}

covomix_status covomix_fit_codebook(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_fit_codebook);
}

covomix_status covomix_train_t2s(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_train_t2s);
}

covomix_status covomix_train_acoustic(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_train_acoustic);
}

covomix_status covomix_synth(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_synth);
}

covomix_status covomix_voice_convert(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_vc);
}

covomix_status covomix_eval(covomix_ctx* ctx) {
  return run_command(ctx, covomix::pipeline::run_eval);
}

}  // extern "C"
