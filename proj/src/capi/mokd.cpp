// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "mokd/mokd.h"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "common/error.hpp"
#include "trainer/checkpoint.hpp"

struct mokd_config {
  mokd::cli::Assignments assignments;
};

namespace {

thread_local std::string g_last_error;

mokd_status to_status(mokd::ErrorCode code) { return static_cast<mokd_status>(mokd::cli::exit_status(code)); }

template <class Fn>
mokd_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MOKD_OK;
  } catch (const mokd::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MOKD_ERR_INTERNAL;
  }
}

mokd_status fail(mokd_status status, const char* message) {
  g_last_error = message;
  return status;
}

mokd_status copy_out(const std::string& text, char* buf, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (buf && capacity > text.size()) {
    std::memcpy(buf, text.c_str(), text.size() + 1);
  } else if (buf || !needed) {
    return fail(MOKD_ERR_USAGE, "output buffer too small");
  }
  return MOKD_OK;
}

}  // namespace

extern "C" {

const char* mokd_version(void) { return "0.1.0"; }

const char* mokd_status_string(mokd_status status) {
  if (status == MOKD_OK) return "ok";
  if (status == MOKD_ERR_INTERNAL) return "internal error";
  if (status < MOKD_OK || status > MOKD_ERR_INTERNAL) return "unknown status";
  return mokd::to_string(static_cast<mokd::ErrorCode>(static_cast<int>(status) - 1));
}

const char* mokd_last_error(void) { return g_last_error.c_str(); }

mokd_status mokd_config_create(mokd_config** out) {
  if (!out) return fail(MOKD_ERR_USAGE, "null output handle");
  return guarded([&] { *out = new mokd_config(); });
}

void mokd_config_destroy(mokd_config* config) { delete config; }

mokd_status mokd_config_load_file(mokd_config* config, const char* path) {
  if (!config || !path) return fail(MOKD_ERR_USAGE, "null argument");
  return guarded([&] {
    std::ifstream in(path);
    if (!in) throw mokd::Error(mokd::ErrorCode::Io, std::string("cannot read config file ") + path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto more = mokd::cli::read_ini(text);
    mokd::cli::Config scratch;
    for (const auto& [k, v] : more) mokd::cli::set_key(scratch, k, v);
    config->assignments.insert(config->assignments.end(), more.begin(), more.end());
  });
}

mokd_status mokd_config_set(mokd_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return fail(MOKD_ERR_USAGE, "null argument");
  return guarded([&] {
    mokd::cli::Config scratch;
    mokd::cli::set_key(scratch, key, value);
    config->assignments.emplace_back(key, value);
  });
}

mokd_status mokd_config_get(const mokd_config* config, const char* key, char* buf, size_t capacity,
                            size_t* needed) {
  if (!config || !key) return fail(MOKD_ERR_USAGE, "null argument");
  std::string text;
  const auto s = guarded([&] { text = mokd::cli::get_key(mokd::cli::resolve(config->assignments, false), key); });
  return s == MOKD_OK ? copy_out(text, buf, capacity, needed) : s;
}

mokd_status mokd_config_to_ini(const mokd_config* config, char* buf, size_t capacity, size_t* needed) {
  if (!config) return fail(MOKD_ERR_USAGE, "null argument");
  std::string text;
  const auto s = guarded([&] { text = mokd::cli::to_ini(mokd::cli::resolve(config->assignments, false)); });
  return s == MOKD_OK ? copy_out(text, buf, capacity, needed) : s;
}

mokd_status mokd_config_validate(const mokd_config* config) {
  if (!config) return fail(MOKD_ERR_USAGE, "null argument");
  return guarded([&] { mokd::cli::resolve(config->assignments, true); });
}

size_t mokd_config_key_count(void) { return mokd::cli::config_keys().size(); }

const char* mokd_config_key_name(size_t index) {
  static const std::vector<std::string> keys = mokd::cli::config_keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

size_t mokd_command_count(void) { return mokd::cli::command_names().size(); }

const char* mokd_command_name(size_t index) {
  const auto& names = mokd::cli::command_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

const char* mokd_command_usage(const char* command) {
  thread_local std::string text;
  text = mokd::cli::command_usage(command ? command : "");
  return text.c_str();
}

mokd_status mokd_run_command(const mokd_config* config, const char* command, const char* resume, int force,
                             mokd_output_fn out, mokd_output_fn err, void* user) {
  if (!config || !command) return fail(MOKD_ERR_USAGE, "null argument");
  mokd::cli::OutputFn out_fn, err_fn;
  if (out) out_fn = [out, user](const std::string& line) { out(line.c_str(), user); };
  std::string last;
  err_fn = [&last, err, user](const std::string& line) {
    if (last.empty()) last = line;
    if (err) err(line.c_str(), user);
  };
  mokd::cli::CommandOptions options;
  if (resume) options.resume = resume;
  options.force = force != 0;
  mokd::cli::Config resolved;
  const auto s = guarded([&] { resolved = mokd::cli::resolve(config->assignments, true); });
  if (s != MOKD_OK) {
    if (err) err((std::string(mokd_status_string(s)) + ": " + g_last_error).c_str(), user);
    return s;
  }
  const int status = mokd::cli::run_command(command, resolved, out_fn, err_fn, options);
  g_last_error = status == 0 ? std::string() : last;
  return static_cast<mokd_status>(status);
}

mokd_status mokd_checkpoint_read_info(const char* path, mokd_checkpoint_info* out) {
  if (!path || !out) return fail(MOKD_ERR_USAGE, "null argument");
  return guarded([&] {
    const auto info = mokd::trainer::checkpoint_info(path);
    out->version = info.version;
    out->config_hash = info.config_hash;
    out->step = info.step;
    out->epoch = info.epoch;
    out->step_in_epoch = info.step_in_epoch;
    out->seed = info.seed;
    out->tensor_count = info.names.size();
  });
}

}  // extern "C"
