// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "data/dataset.hpp"
#include "trainer/config.hpp"

namespace mokd::cli {

struct EvalConfig {
  std::filesystem::path checkpoint;    // run under evaluation
  std::filesystem::path checkpoint_b;  // second run for consistency
  std::filesystem::path config_b;      // its resolved config, when it differs
  int model_a = 1, model_b = 2;        // model index within each checkpoint
  bool use_momentum = true;            // evaluate the momentum (teacher) encoder
  std::vector<int> ks{10, 20, 100, 200};
  double knn_temperature = 0.07;
  int consistency_k = 20;
  int linear_epochs = 100;
  double linear_lr = 0.1;
  std::size_t linear_batch = 256;
  std::size_t mad_images = 16;
  std::size_t feature_batch = 128;
};

struct Config {
  trainer::TrainConfig train = trainer::default_config();
  std::filesystem::path data_path;       // CIFAR directory/file or class-folder root
  std::filesystem::path test_path;       // image-directory test root (CIFAR uses test_batch.bin)
  data::Format format = data::Format::CifarBinary;
  std::size_t train_limit = 0, test_limit = 0;  // 0 keeps every image
  std::filesystem::path output_dir = "runs/default";
  EvalConfig eval;
};

/// Environment variable naming the data root used when data.path is unset.
inline constexpr const char* kDataRootEnv = "MOKD_DATA_ROOT";

/// Every accepted key, as section.name.
std::vector<std::string> config_keys();

/// Sets one dotted key from text. Unknown keys, malformed values and values
/// out of range are config errors naming the key.
void set_key(Config& config, const std::string& key, const std::string& value);
std::string get_key(const Config& config, const std::string& key);

/// Ordered (section.key, value) assignments; later entries win.
using Assignments = std::vector<std::pair<std::string, std::string>>;

/// Splits INI text into assignments without interpreting values.
Assignments read_ini(const std::string& text);

/// Applies assignments over the defaults. Architecture keys go first since
/// they select the optimizer and loss-weight defaults. Unknown keys are always
/// rejected; cross-field validation runs when `check` is set.
Config resolve(const Assignments& assignments, bool check = true);

/// INI text ([section] then key = value; '#' and ';' start comments) plus
/// "section.key=value" overrides, which win. Defaults fill everything else;
/// the whole result is validated before returning.
Config parse_config_text(const std::string& ini, const std::vector<std::string>& overrides = {});
Config parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

/// Fully resolved INI; parsing it back yields the same Config.
std::string to_ini(const Config& config);

void validate(const Config& config);

}  // namespace mokd::cli
