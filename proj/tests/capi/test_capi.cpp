// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "cli/config.hpp"
#include "doctest.h"
#include "mokd/mokd.h"
#include "support/synthetic.hpp"
#include "support/tiny.hpp"

namespace fs = std::filesystem;

namespace {

std::string get(const mokd_config* c, const char* key) {
  std::size_t needed = 0;
  REQUIRE(mokd_config_get(c, key, nullptr, 0, &needed) == MOKD_OK);
  std::string out(needed, '\0');
  REQUIRE(mokd_config_get(c, key, out.data(), out.size(), &needed) == MOKD_OK);
  out.resize(needed - 1);
  return out;
}

std::string ini(const mokd_config* c) {
  std::size_t needed = 0;
  REQUIRE(mokd_config_to_ini(c, nullptr, 0, &needed) == MOKD_OK);
  std::string out(needed, '\0');
  REQUIRE(mokd_config_to_ini(c, out.data(), out.size(), nullptr) == MOKD_OK);
  out.resize(needed - 1);
  return out;
}

struct Handle {
  mokd_config* c = nullptr;
  Handle() { REQUIRE(mokd_config_create(&c) == MOKD_OK); }
  ~Handle() { mokd_config_destroy(c); }
};

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("status codes and names") {
  CHECK(std::string(mokd_status_string(MOKD_OK)) == "ok");
  CHECK(std::string(mokd_status_string(MOKD_ERR_CORRUPTION)) == "corruption error");
  CHECK(std::string(mokd_status_string(static_cast<mokd_status>(99))) == "unknown status");
  CHECK(mokd_config_key_count() == mokd::cli::config_keys().size());
  CHECK(std::string(mokd_config_key_name(0)) == "model1.arch");
  CHECK(mokd_config_key_name(mokd_config_key_count()) == nullptr);
  REQUIRE(mokd_command_count() == 6);
  CHECK(std::string(mokd_command_name(0)) == "pretrain");
  CHECK(std::string(mokd_command_usage("eval-knn")).find("eval.checkpoint") != std::string::npos);
  CHECK(std::string(mokd_version()).size() > 0);
}

TEST_CASE("config handle resolves like the file parser") {
  Handle h;
  CHECK(ini(h.c) == mokd::cli::to_ini(mokd::cli::parse_config_text("")));
  CHECK(mokd_config_set(h.c, "model2.arch", "conv") == MOKD_OK);
  CHECK(get(h.c, "model2.optimizer") == "sgd");
  CHECK(get(h.c, "model1.lambda") == "1");
  CHECK(mokd_config_set(h.c, "model2.lambda", "0.5") == MOKD_OK);
  CHECK(get(h.c, "model2.lambda") == "0.5");

  CHECK(mokd_config_set(h.c, "model2.lambda", "1.5") == MOKD_ERR_CONFIG);
  CHECK(std::string(mokd_last_error()).find("model2.lambda") != std::string::npos);
  CHECK(get(h.c, "model2.lambda") == "0.5");  // rejected values leave the handle unchanged
  CHECK(std::string(mokd_last_error()).empty());
  CHECK(mokd_config_set(h.c, "nope.key", "1") == MOKD_ERR_CONFIG);
  CHECK(mokd_config_get(h.c, "nope.key", nullptr, 0, nullptr) == MOKD_ERR_CONFIG);

  char small[2];
  std::size_t needed = 0;
  CHECK(mokd_config_get(h.c, "model1.arch", small, sizeof(small), &needed) == MOKD_ERR_USAGE);
  CHECK(needed == 5);

  // Cross-field rules are checked on validate and on run, not on set.
  CHECK(mokd_config_set(h.c, "schedule.warmup_epochs", "30") == MOKD_OK);
  CHECK(mokd_config_validate(h.c) == MOKD_ERR_CONFIG);
  CHECK(mokd_config_set(h.c, "run.epochs", "40") == MOKD_OK);
  CHECK(mokd_config_validate(h.c) == MOKD_OK);

  CHECK(mokd_config_create(nullptr) == MOKD_ERR_USAGE);
  CHECK(mokd_config_set(nullptr, "a", "b") == MOKD_ERR_USAGE);
}

TEST_CASE("last error is per thread") {
  Handle h;
  REQUIRE(mokd_config_set(h.c, "run.epochs", "0") == MOKD_ERR_CONFIG);
  std::string other;
  std::thread([&] { other = mokd_last_error(); }).join();
  CHECK(other.empty());
  CHECK(std::string(mokd_last_error()).find("run.epochs") != std::string::npos);
}

TEST_CASE("commands run through the C boundary") {
  const auto dir = testing_support::scratch_dir("capi");
  testing_support::write_cifar(dir / "data_batch_1.bin", testing_support::synthetic_dataset(40, 4, 3));
  testing_support::write_cifar(dir / "test_batch.bin", testing_support::synthetic_dataset(20, 4, 4));
  mokd::cli::Config tiny;
  tiny.train = testing_support::tiny_config();
  tiny.train.epochs = 1;
  tiny.train.warmup_epochs = 0;
  {
    std::ofstream f(dir / "tiny.ini");
    f << mokd::cli::to_ini(tiny);
  }

  Handle h;
  REQUIRE(mokd_config_load_file(h.c, (dir / "tiny.ini").c_str()) == MOKD_OK);
  REQUIRE(mokd_config_set(h.c, "data.path", dir.c_str()) == MOKD_OK);
  REQUIRE(mokd_config_set(h.c, "run.output_dir", (dir / "run").c_str()) == MOKD_OK);
  CHECK(mokd_config_load_file(h.c, (dir / "missing.ini").c_str()) == MOKD_ERR_IO);

  std::vector<std::string> out, err;
  CHECK(mokd_run_command(h.c, "eval-knn", nullptr, 0, collect, collect, &err) == MOKD_ERR_USAGE);
  CHECK(std::string(mokd_last_error()).find("eval.checkpoint") != std::string::npos);
  CHECK_FALSE(err.empty());

  REQUIRE(mokd_run_command(h.c, "pretrain", nullptr, 0, collect, nullptr, &out) == MOKD_OK);
  CHECK_FALSE(out.empty());
  const fs::path ckpt = dir / "run" / "checkpoints" / "final.ckpt";
  mokd_checkpoint_info info{};
  REQUIRE(mokd_checkpoint_read_info(ckpt.c_str(), &info) == MOKD_OK);
  CHECK(info.version == 1);
  CHECK(info.step == 10);
  CHECK(info.epoch == 1);
  CHECK(info.config_hash == mokd::trainer::config_hash(tiny.train));
  CHECK(info.tensor_count > 0);
  CHECK(mokd_checkpoint_read_info((dir / "none.ckpt").c_str(), &info) == MOKD_ERR_IO);

  REQUIRE(mokd_config_set(h.c, "eval.checkpoint", ckpt.c_str()) == MOKD_OK);
  REQUIRE(mokd_config_set(h.c, "eval.k", "1,5") == MOKD_OK);
  out.clear();
  CHECK(mokd_run_command(h.c, "eval-knn", nullptr, 0, collect, nullptr, &out) == MOKD_OK);
  CHECK(out.size() >= 2);
}
