// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/checks.hpp"
#include "support/synthetic.hpp"
#include "support/tiny.hpp"

using namespace mokd;
using namespace mokd::cli;
using testing_support::check_error;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

/// CIFAR-style directory with 100 training and 40 test images.
fs::path cifar_dir(const std::string& name) {
  const auto dir = testing_support::scratch_dir(name);
  testing_support::write_cifar(dir / "data_batch_1.bin", testing_support::synthetic_dataset(100, 4, 1));
  testing_support::write_cifar(dir / "test_batch.bin", testing_support::synthetic_dataset(40, 4, 2));
  return dir;
}

Config tiny_cli(const fs::path& data, const fs::path& out) {
  Config c;
  c.train = testing_support::tiny_config();
  c.train.epochs = 1;
  c.train.warmup_epochs = 0;
  c.data_path = data;
  c.output_dir = out;
  c.eval.ks = {1, 5};
  c.eval.consistency_k = 5;
  c.eval.linear_epochs = 3;
  c.eval.mad_images = 4;
  return c;
}

struct Captured {
  std::vector<std::string> out, err;
  OutputFn out_fn() {
    return [this](const std::string& s) { out.push_back(s); };
  }
  OutputFn err_fn() {
    return [this](const std::string& s) { err.push_back(s); };
  }
  std::string all_err() const {
    std::string s;
    for (const auto& l : err) s += l + "\n";
    return s;
  }
};

}  // namespace

TEST_CASE("empty config resolves to the documented defaults") {
  unsetenv(kDataRootEnv);
  const Config c = parse_config_text("");
  CHECK(to_ini(c) == to_ini(Config{}));
  CHECK(get_key(c, "model1.arch") == "conv");
  CHECK(get_key(c, "model2.arch") == "vit");
  CHECK(c.train.models[0].lambda == 0.1);
  CHECK(c.train.models[1].lambda == 1.0);
  CHECK(get_key(c, "model1.optimizer") == "sgd");
  CHECK(get_key(c, "model2.optimizer") == "adamw");
  CHECK(c.train.models[0].network.head.t_depth == 3);
  CHECK(c.train.student_tau == 0.1);
  CHECK(c.train.teacher_tau_start == 0.04);
  CHECK(c.train.teacher_tau == 0.07);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.epochs == 20);
  CHECK(c.data_path.empty());
}

TEST_CASE("file values apply and command-line overrides win") {
  const std::string ini =
      "# comment\n[model2]\nlambda = 0.25   ; trailing comment\n\n[run]\nepochs = 7\nseed = 99\n";
  const Config f = parse_config_text(ini);
  CHECK(f.train.models[1].lambda == 0.25);
  CHECK(f.train.epochs == 7);
  CHECK(f.train.seed == 99U);
  const Config o = parse_config_text(ini, {"model2.lambda=0.5", "run.epochs = 9"});
  CHECK(o.train.models[1].lambda == 0.5);
  CHECK(o.train.epochs == 9);
  CHECK(o.train.seed == 99U);
}

TEST_CASE("validation names the offending key") {
  check_error(ErrorCode::Config, [] { parse_config_text("", {"model2.lambda=1.5"}); }, "model2.lambda");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"model2.lambda=1.5"}); }, "[0, 1]");
  check_error(ErrorCode::Config, [] { parse_config_text("[loss]\nbogus = 1\n"); }, "loss.bogus");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"run.batch_size=abc"}); }, "run.batch_size");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"model1.arch=resnet"}); }, "model1.arch");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"schedule.warmup_epochs=30"}); },
              "schedule.warmup_epochs");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"model1.head.out_dim=64"}); }, "out_dim");
  check_error(ErrorCode::Config, [] { parse_config_text("epochs = 3\n"); }, "line 1");
  check_error(ErrorCode::Config, [] { parse_config_text("", {"run.epochs"}); }, "run.epochs");
  check_error(ErrorCode::Io, [] { parse_config("/nonexistent/mokd.ini"); }, "mokd.ini");
}

TEST_CASE("architecture selects optimizer and loss-weight defaults") {
  const Config same = parse_config_text("", {"model2.arch=conv"});
  CHECK(same.train.models[0].lambda == 1.0);
  CHECK(same.train.models[1].lambda == 1.0);
  CHECK(get_key(same, "model2.optimizer") == "sgd");
  CHECK(same.train.models[1].base_lr == 0.1);

  // Explicit values survive regardless of where the arch key appears.
  const Config expl = parse_config_text("[model1]\nlr = 0.05\nlambda = 0.3\narch = vit\n");
  CHECK(get_key(expl, "model1.optimizer") == "adamw");
  CHECK(expl.train.models[0].base_lr == 0.05);
  CHECK(expl.train.models[0].lambda == 0.3);
}

TEST_CASE("resolved config round-trips through its text form") {
  Config c = parse_config_text("", {"model1.conv.widths=8,16,32", "eval.k=1,3", "data.hue=0.05", "loss.t_branch=false",
                                    "run.dtype=f64", "eval.network=online"});
  const std::string text = to_ini(c);
  const Config back = parse_config_text(text);
  CHECK(to_ini(back) == text);
  CHECK(trainer::config_hash(back.train) == trainer::config_hash(c.train));
  CHECK(back.eval.ks == std::vector<int>{1, 3});
  CHECK_FALSE(back.eval.use_momentum);
  for (const auto& key : config_keys()) CHECK_MESSAGE(get_key(back, key) == get_key(c, key), key);
}

TEST_CASE("data root falls back to the environment") {
  setenv(kDataRootEnv, "/data/cifar", 1);
  CHECK(parse_config_text("").data_path == fs::path("/data/cifar"));
  CHECK(parse_config_text("", {"data.path=/elsewhere"}).data_path == fs::path("/elsewhere"));
  unsetenv(kDataRootEnv);
}

TEST_CASE("pretrain smoke run writes config, checkpoint and metrics") {
  const auto data = cifar_dir("cli_data");
  const auto run = testing_support::scratch_dir("cli_run");
  const Config c = tiny_cli(data, run);
  Captured cap;
  REQUIRE_MESSAGE(run_command("pretrain", c, cap.out_fn(), cap.err_fn()) == 0, cap.all_err());
  CHECK(fs::exists(run / "config.ini"));
  CHECK(fs::exists(run / "checkpoints" / "final.ckpt"));
  CHECK(line_count(run / "metrics.ndjson") == 25);  // 100 images / batch 4

  // The echoed config reproduces the run bit for bit.
  const auto rerun = testing_support::scratch_dir("cli_rerun");
  Config again = parse_config(run / "config.ini", {"run.output_dir=" + rerun.string()});
  CHECK(trainer::config_hash(again.train) == trainer::config_hash(c.train));
  REQUIRE(run_command("pretrain", again, {}, cap.err_fn()) == 0);
  CHECK(slurp(rerun / "checkpoints" / "final.ckpt") == slurp(run / "checkpoints" / "final.ckpt"));

  SUBCASE("evaluation commands") {
    Config e = c;
    e.eval.checkpoint = run / "checkpoints" / "final.ckpt";
    for (const std::string cmd : {"eval-knn", "eval-linear", "analyze-mad", "export-embeddings"}) {
      Captured out;
      CHECK_MESSAGE(run_command(cmd, e, out.out_fn(), out.err_fn()) == 0, cmd << ": " << out.all_err());
    }
    CHECK(fs::exists(run / "reports" / "knn.json"));
    CHECK(fs::exists(run / "reports" / "linear.json"));
    CHECK(fs::exists(run / "exports" / "model1-momentum.f32"));
    CHECK(fs::exists(run / "exports" / "model2-momentum.f32.txt"));
    const auto mad = nlohmann::json::parse(slurp(run / "reports" / "mad.json"));
    CHECK(mad[0]["kind"] == "cosine pseudo-attention");
    CHECK(mad[1]["kind"] == "attention");
    CHECK(mad[1]["per_layer"].size() == 1);

    // Consistency across the two identical runs, between different models.
    e.eval.checkpoint_b = rerun / "checkpoints" / "final.ckpt";
    e.eval.config_b = run / "config.ini";
    Captured out;
    REQUIRE(run_command("consistency", e, out.out_fn(), out.err_fn()) == 0);
    const auto report = nlohmann::json::parse(slurp(run / "reports" / "consistency.json"));
    const double f = report["fraction"];
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(std::any_of(out.out.begin(), out.out.end(), [](const std::string& l) { return l.rfind("consistency ", 0) == 0; }));

    // Same model of two identical runs agrees everywhere.
    e.eval.model_b = 1;
    REQUIRE(run_command("consistency", e, {}, {}) == 0);
    CHECK(nlohmann::json::parse(slurp(run / "reports" / "consistency.json"))["fraction"] == 1.0);
  }
}

TEST_CASE("command failures exit nonzero with usage text") {
  const auto data = cifar_dir("cli_fail");
  Config c = tiny_cli(data, testing_support::scratch_dir("cli_fail_run"));
  Captured cap;
  const int status = run_command("eval-knn", c, cap.out_fn(), cap.err_fn());
  CHECK(status == exit_status(ErrorCode::Usage));
  CHECK(cap.all_err().find("eval.checkpoint") != std::string::npos);
  CHECK(cap.all_err().find("usage: eval-knn") != std::string::npos);

  Captured unknown;
  CHECK(run_command("train", c, {}, unknown.err_fn()) != 0);
  CHECK(unknown.all_err().find("pretrain") != std::string::npos);

  c.eval.checkpoint = data / "missing.ckpt";
  CHECK(run_command("eval-knn", c, {}, {}) == exit_status(ErrorCode::Io));

  Config no_data = c;
  no_data.data_path.clear();
  Captured nd;
  CHECK(run_command("pretrain", no_data, {}, nd.err_fn()) == exit_status(ErrorCode::Usage));
  CHECK(nd.all_err().find(kDataRootEnv) != std::string::npos);
}
