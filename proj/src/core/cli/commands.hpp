// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "common/error.hpp"

namespace mokd::cli {

/// Receives one line of human-readable output (no trailing newline).
using OutputFn = std::function<void(const std::string&)>;

struct CommandOptions {
  std::filesystem::path resume;  // pretrain only
  bool force = false;            // accept checkpoints written under another config
};

/// pretrain, eval-knn, eval-linear, analyze-mad, consistency, export-embeddings
const std::vector<std::string>& command_names();

/// One paragraph describing what the command needs.
std::string command_usage(const std::string& name);

/// Runs a command, throwing mokd::Error on failure.
void execute(const std::string& name, const Config& config, const OutputFn& out, const CommandOptions& options = {});

/// Exit status for an error code; 0 is success.
int exit_status(ErrorCode code);
inline constexpr int kExitInternal = 11;

/// Runs a command and maps failures to a nonzero exit status. The error
/// message, followed by usage text for usage errors, goes to `err`.
int run_command(const std::string& name, const Config& config, const OutputFn& out, const OutputFn& err,
                const CommandOptions& options = {});

}  // namespace mokd::cli
