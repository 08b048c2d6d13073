// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C API. Every config key is also a flag,
// e.g. --model2.lambda 0.5; --set key=value is equivalent.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mokd/mokd.h"

namespace {

void print_out(const char* line, void*) { std::printf("%s\n", line); }
void print_err(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

int report(mokd_status s) {
  if (s != MOKD_OK) std::fprintf(stderr, "%s: %s\n", mokd_status_string(s), mokd_last_error());
  return static_cast<int>(s);
}

struct Handle {
  mokd_config* c = nullptr;
  ~Handle() { mokd_config_destroy(c); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-model online distillation: pretraining, evaluation and analysis"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, resume;
  std::vector<std::string> sets;
  bool force = false;
  app.add_option("-c,--config", config_file, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override as section.key=value (repeatable)");
  app.add_option("--resume", resume, "Checkpoint to resume pretraining from");
  app.add_flag("--force", force, "Accept checkpoints written under a different config");

  std::map<std::string, std::string> keyed;
  for (std::size_t i = 0; i < mokd_config_key_count(); ++i) {
    const std::string key = mokd_config_key_name(i);
    app.add_option("--" + key, keyed[key])->group("Config keys");
  }

  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < mokd_command_count(); ++i) {
    commands.push_back(app.add_subcommand(mokd_command_name(i), mokd_command_usage(mokd_command_name(i))));
  }
  auto* keys_cmd = app.add_subcommand("keys", "List every config key with its resolved value");
  auto* show_cmd = app.add_subcommand("show-config", "Print the resolved config as INI");

  CLI11_PARSE(app, argc, argv);

  Handle h;
  if (const auto s = mokd_config_create(&h.c); s != MOKD_OK) return report(s);
  if (!config_file.empty()) {
    if (const auto s = mokd_config_load_file(h.c, config_file.c_str()); s != MOKD_OK) return report(s);
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "--set expects section.key=value, got '%s'\n", kv.c_str());
      return MOKD_ERR_USAGE;
    }
    if (const auto s = mokd_config_set(h.c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != MOKD_OK) {
      return report(s);
    }
  }
  for (std::size_t i = 0; i < mokd_config_key_count(); ++i) {
    const std::string key = mokd_config_key_name(i);
    if (app.count("--" + key) == 0) continue;
    if (const auto s = mokd_config_set(h.c, key.c_str(), keyed[key].c_str()); s != MOKD_OK) return report(s);
  }

  if (keys_cmd->parsed() || show_cmd->parsed()) {
    if (const auto s = mokd_config_validate(h.c); s != MOKD_OK) return report(s);
    std::size_t needed = 0;
    if (show_cmd->parsed()) {
      mokd_config_to_ini(h.c, nullptr, 0, &needed);
      std::string text(needed, '\0');
      mokd_config_to_ini(h.c, text.data(), text.size(), nullptr);
      std::fputs(text.c_str(), stdout);
      return 0;
    }
    for (std::size_t i = 0; i < mokd_config_key_count(); ++i) {
      const char* key = mokd_config_key_name(i);
      mokd_config_get(h.c, key, nullptr, 0, &needed);
      std::string value(needed, '\0');
      mokd_config_get(h.c, key, value.data(), value.size(), nullptr);
      std::printf("%s = %s\n", key, value.c_str());
    }
    return 0;
  }

  for (auto* cmd : commands) {
    if (!cmd->parsed()) continue;
    return static_cast<int>(mokd_run_command(h.c, cmd->get_name().c_str(), resume.empty() ? nullptr : resume.c_str(),
                                             force ? 1 : 0, print_out, print_err, nullptr));
  }
  return 0;
}
