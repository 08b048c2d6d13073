// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <type_traits>

#include "common/error.hpp"

namespace mokd::cli {

namespace {

using Setter = std::function<void(Config&, const std::string&)>;
using Getter = std::function<std::string(const Config&)>;

struct KeyDef {
  std::string name;
  Setter set;
  Getter get;
};

[[noreturn]] void bad(const std::string& key, const std::string& why) { throw Error(ErrorCode::Config, key + ": " + why); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, end);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad(key, "expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::string range_text(double lo, double hi, bool open_lo) {
  return std::string(open_lo ? "(" : "[") + fmt_double(lo) + ", " + fmt_double(hi) + "]";
}

template <class Access>
KeyDef real(std::string name, Access access, double lo, double hi, bool open_lo = false) {
  return {name,
          [=](Config& c, const std::string& v) {
            const double x = to_double(name, v);
            if (!(open_lo ? x > lo : x >= lo) || !(x <= hi)) bad(name, fmt_double(x) + " outside " + range_text(lo, hi, open_lo));
            access(c) = x;
          },
          [=](const Config& c) { return fmt_double(access(const_cast<Config&>(c))); }};
}

template <class Access>
KeyDef integer(std::string name, Access access, long long lo, long long hi) {
  return {name,
          [=](Config& c, const std::string& v) {
            const long long x = to_int(name, v);
            if (x < lo || x > hi) bad(name, std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            using T = std::remove_reference_t<decltype(access(c))>;
            static_assert(std::is_integral_v<T>);
            access(c) = static_cast<T>(x);
          },
          [=](const Config& c) { return std::to_string(access(const_cast<Config&>(c))); }};
}

template <class Access>
KeyDef boolean(std::string name, Access access) {
  return {name, [=](Config& c, const std::string& v) { access(c) = to_bool(name, v); },
          [=](const Config& c) { return std::string(access(const_cast<Config&>(c)) ? "true" : "false"); }};
}

template <class Access>
KeyDef path(std::string name, Access access) {
  return {name, [=](Config& c, const std::string& v) { access(c) = v; },
          [=](const Config& c) { return access(const_cast<Config&>(c)).string(); }};
}

template <class T, class Access>
KeyDef int_list(std::string name, Access access, long long lo, long long hi, std::size_t max_items) {
  return {name,
          [=](Config& c, const std::string& v) {
            std::vector<T> out;
            std::stringstream ss(v);
            for (std::string item; std::getline(ss, item, ',');) {
              const long long x = to_int(name, trim(item));
              if (x < lo || x > hi) bad(name, std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
              out.push_back(static_cast<T>(x));
            }
            if (out.empty() || out.size() > max_items) bad(name, "expected 1 to " + std::to_string(max_items) + " comma-separated values");
            access(c) = out;
          },
          [=](const Config& c) {
            std::string s;
            for (auto x : access(const_cast<Config&>(c))) s += (s.empty() ? "" : ",") + std::to_string(x);
            return s;
          }};
}

std::vector<KeyDef> model_keys(int index) {
  const std::string p = "model" + std::to_string(index) + ".";
  const auto k = static_cast<std::size_t>(index - 1);
  auto m = [k](Config& c) -> trainer::ModelSpec& { return c.train.models[k]; };
  std::vector<KeyDef> keys;
  keys.push_back({p + "arch",
                  [m, p](Config& c, const std::string& v) {
                    try {
                      m(c).network.arch = models::parse_arch(v);
                    } catch (const Error&) {
                      bad(p + "arch", "expected conv or vit, got '" + v + "'");
                    }
                  },
                  [m](const Config& c) { return std::string(models::to_string(m(const_cast<Config&>(c)).network.arch)); }});
  keys.push_back(integer(p + "conv.stem_width", [m](Config& c) -> auto& { return m(c).network.conv.stem_width; }, 1, 4096));
  keys.push_back(int_list<std::int64_t>(p + "conv.widths", [m](Config& c) -> auto& { return m(c).network.conv.widths; }, 1, 4096, 6));
  keys.push_back(integer(p + "conv.groups", [m](Config& c) -> auto& { return m(c).network.conv.groups; }, 1, 256));
  keys.push_back(integer(p + "vit.image_size", [m](Config& c) -> auto& { return m(c).network.vit.image_size; }, 4, 1024));
  keys.push_back(integer(p + "vit.patch", [m](Config& c) -> auto& { return m(c).network.vit.patch; }, 1, 64));
  keys.push_back(integer(p + "vit.width", [m](Config& c) -> auto& { return m(c).network.vit.width; }, 1, 4096));
  keys.push_back(integer(p + "vit.depth", [m](Config& c) -> auto& { return m(c).network.vit.depth; }, 1, 48));
  keys.push_back(integer(p + "vit.heads", [m](Config& c) -> auto& { return m(c).network.vit.heads; }, 1, 64));
  keys.push_back(real(p + "vit.mlp_ratio", [m](Config& c) -> auto& { return m(c).network.vit.mlp_ratio; }, 0.0, 16.0, true));
  keys.push_back(integer(p + "head.hidden", [m](Config& c) -> auto& { return m(c).network.head.hidden; }, 1, 65536));
  keys.push_back(integer(p + "head.bottleneck", [m](Config& c) -> auto& { return m(c).network.head.bottleneck; }, 1, 4096));
  keys.push_back(integer(p + "head.out_dim", [m](Config& c) -> auto& { return m(c).network.head.out_dim; }, 2, 262144));
  keys.push_back(integer(p + "head.t_width", [m](Config& c) -> auto& { return m(c).network.head.t_width; }, 1, 4096));
  keys.push_back(integer(p + "head.t_heads", [m](Config& c) -> auto& { return m(c).network.head.t_heads; }, 1, 64));
  keys.push_back(integer(p + "head.t_depth", [m](Config& c) -> auto& { return m(c).network.head.t_depth; }, 1, 24));
  keys.push_back(real(p + "head.t_mlp_ratio", [m](Config& c) -> auto& { return m(c).network.head.t_mlp_ratio; }, 0.0, 16.0, true));
  keys.push_back({p + "optimizer",
                  [m, p](Config& c, const std::string& v) {
                    try {
                      m(c).optimizer.kind = schedules::parse_optimizer(v);
                    } catch (const Error&) {
                      bad(p + "optimizer", "expected sgd or adamw, got '" + v + "'");
                    }
                  },
                  [m](const Config& c) { return std::string(schedules::to_string(m(const_cast<Config&>(c)).optimizer.kind)); }});
  keys.push_back(real(p + "lr", [m](Config& c) -> auto& { return m(c).base_lr; }, 0.0, 10.0, true));
  keys.push_back(real(p + "weight_decay", [m](Config& c) -> auto& { return m(c).optimizer.weight_decay; }, 0.0, 0.999));
  keys.push_back(real(p + "momentum", [m](Config& c) -> auto& { return m(c).optimizer.momentum; }, 0.0, 0.999));
  keys.push_back(real(p + "beta1", [m](Config& c) -> auto& { return m(c).optimizer.beta1; }, 0.0, 0.999999));
  keys.push_back(real(p + "beta2", [m](Config& c) -> auto& { return m(c).optimizer.beta2; }, 0.0, 0.999999));
  keys.push_back(real(p + "eps", [m](Config& c) -> auto& { return m(c).optimizer.eps; }, 0.0, 1e-2, true));
  keys.push_back(real(p + "clip_norm", [m](Config& c) -> auto& { return m(c).optimizer.clip_norm; }, 0.0, 1e6));
  keys.push_back(real(p + "lambda", [m](Config& c) -> auto& { return m(c).lambda; }, 0.0, 1.0));
  return keys;
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    for (int i : {1, 2}) {
      auto mk = model_keys(i);
      k.insert(k.end(), mk.begin(), mk.end());
    }
    using C = Config;
    k.push_back(real("loss.student_tau", [](C& c) -> auto& { return c.train.student_tau; }, 0.0, 10.0, true));
    k.push_back(real("loss.teacher_tau_start", [](C& c) -> auto& { return c.train.teacher_tau_start; }, 0.0, 10.0, true));
    k.push_back(real("loss.teacher_tau", [](C& c) -> auto& { return c.train.teacher_tau; }, 0.0, 10.0, true));
    k.push_back(integer("loss.teacher_tau_ramp_epochs", [](C& c) -> auto& { return c.train.teacher_tau_ramp_epochs; }, 0, 100000));
    k.push_back(real("loss.center_momentum", [](C& c) -> auto& { return c.train.center_momentum; }, 0.0, 1.0));
    k.push_back(boolean("loss.t_branch", [](C& c) -> auto& { return c.train.t_branch; }));
    k.push_back(boolean("loss.search_query_grad", [](C& c) -> auto& { return c.train.search_query_grad; }));
    k.push_back(integer("schedule.warmup_epochs", [](C& c) -> auto& { return c.train.warmup_epochs; }, 0, 100000));
    k.push_back(real("schedule.min_lr", [](C& c) -> auto& { return c.train.min_lr; }, 0.0, 1.0));
    k.push_back(real("schedule.ema_base", [](C& c) -> auto& { return c.train.ema_base; }, 0.0, 1.0));
    k.push_back(path("data.path", [](C& c) -> auto& { return c.data_path; }));
    k.push_back(path("data.test_path", [](C& c) -> auto& { return c.test_path; }));
    k.push_back({"data.format",
                 [](C& c, const std::string& v) {
                   try {
                     c.format = data::parse_format(v);
                   } catch (const Error&) {
                     bad("data.format", "expected cifar-binary or image-directory, got '" + v + "'");
                   }
                 },
                 [](const C& c) { return std::string(data::to_string(c.format)); }});
    k.push_back(integer("data.train_limit", [](C& c) -> auto& { return c.train_limit; }, 0, 1000000000));
    k.push_back(integer("data.test_limit", [](C& c) -> auto& { return c.test_limit; }, 0, 1000000000));
    auto aug = [](C& c) -> data::AugmentConfig& { return c.train.augment; };
    k.push_back(integer("data.global_crops", [aug](C& c) -> auto& { return aug(c).global.count; }, 2, 16));
    k.push_back(integer("data.global_size", [aug](C& c) -> auto& { return aug(c).global.size; }, 4, 1024));
    k.push_back(real("data.global_scale_min", [aug](C& c) -> auto& { return aug(c).global.scale_min; }, 0.0, 1.0, true));
    k.push_back(real("data.global_scale_max", [aug](C& c) -> auto& { return aug(c).global.scale_max; }, 0.0, 1.0, true));
    k.push_back(integer("data.local_crops", [aug](C& c) -> auto& { return aug(c).local.count; }, 0, 64));
    k.push_back(integer("data.local_size", [aug](C& c) -> auto& { return aug(c).local.size; }, 4, 1024));
    k.push_back(real("data.local_scale_min", [aug](C& c) -> auto& { return aug(c).local.scale_min; }, 0.0, 1.0, true));
    k.push_back(real("data.local_scale_max", [aug](C& c) -> auto& { return aug(c).local.scale_max; }, 0.0, 1.0, true));
    k.push_back(real("data.flip_prob", [aug](C& c) -> auto& { return aug(c).flip_prob; }, 0.0, 1.0));
    k.push_back(real("data.jitter_prob", [aug](C& c) -> auto& { return aug(c).jitter_prob; }, 0.0, 1.0));
    k.push_back(real("data.brightness", [aug](C& c) -> auto& { return aug(c).brightness; }, 0.0, 1.0));
    k.push_back(real("data.contrast", [aug](C& c) -> auto& { return aug(c).contrast; }, 0.0, 1.0));
    k.push_back(real("data.saturation", [aug](C& c) -> auto& { return aug(c).saturation; }, 0.0, 1.0));
    k.push_back(real("data.hue", [aug](C& c) -> auto& { return aug(c).hue; }, 0.0, 0.5));
    k.push_back(real("data.grayscale_prob", [aug](C& c) -> auto& { return aug(c).grayscale_prob; }, 0.0, 1.0));
    k.push_back(real("data.blur_prob_first", [aug](C& c) -> auto& { return aug(c).blur_prob_first; }, 0.0, 1.0));
    k.push_back(real("data.blur_prob_other", [aug](C& c) -> auto& { return aug(c).blur_prob_other; }, 0.0, 1.0));
    k.push_back(real("data.blur_sigma_min", [aug](C& c) -> auto& { return aug(c).blur_sigma_min; }, 0.0, 100.0, true));
    k.push_back(real("data.blur_sigma_max", [aug](C& c) -> auto& { return aug(c).blur_sigma_max; }, 0.0, 100.0, true));
    k.push_back(boolean("data.normalize", [aug](C& c) -> auto& { return aug(c).normalize; }));
    k.push_back(integer("run.epochs", [](C& c) -> auto& { return c.train.epochs; }, 1, 100000));
    k.push_back(integer("run.batch_size", [](C& c) -> auto& { return c.train.batch_size; }, 1, 65536));
    k.push_back(integer("run.steps_per_epoch", [](C& c) -> auto& { return c.train.steps_per_epoch; }, 0, 1000000000));
    k.push_back({"run.seed",
                 [](C& c, const std::string& v) {
                   std::uint64_t x = 0;
                   const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                   if (ec != std::errc{} || end != v.data() + v.size()) bad("run.seed", "expected an unsigned integer, got '" + v + "'");
                   c.train.seed = x;
                 },
                 [](const C& c) { return std::to_string(c.train.seed); }});
    k.push_back(boolean("run.deterministic", [](C& c) -> auto& { return c.train.deterministic; }));
    k.push_back(integer("run.workers", [](C& c) -> auto& { return c.train.workers; }, 1, 256));
    k.push_back({"run.dtype",
                 [](C& c, const std::string& v) {
                   if (v == "f32") {
                     c.train.dtype = engine::DType::F32;
                   } else if (v == "f64") {
                     c.train.dtype = engine::DType::F64;
                   } else {
                     bad("run.dtype", "expected f32 or f64, got '" + v + "'");
                   }
                 },
                 [](const C& c) { return std::string(engine::to_string(c.train.dtype)); }});
    k.push_back(path("run.output_dir", [](C& c) -> auto& { return c.output_dir; }));
    k.push_back(integer("run.checkpoint_every", [](C& c) -> auto& { return c.train.checkpoint_every; }, 0, 100000));
    k.push_back(integer("run.audit_every", [](C& c) -> auto& { return c.train.audit_every; }, 0, 1000000000));
    k.push_back(path("eval.checkpoint", [](C& c) -> auto& { return c.eval.checkpoint; }));
    k.push_back(path("eval.checkpoint_b", [](C& c) -> auto& { return c.eval.checkpoint_b; }));
    k.push_back(path("eval.config_b", [](C& c) -> auto& { return c.eval.config_b; }));
    k.push_back(integer("eval.model_a", [](C& c) -> auto& { return c.eval.model_a; }, 1, 2));
    k.push_back(integer("eval.model_b", [](C& c) -> auto& { return c.eval.model_b; }, 1, 2));
    k.push_back({"eval.network",
                 [](C& c, const std::string& v) {
                   if (v != "momentum" && v != "online") bad("eval.network", "expected momentum or online, got '" + v + "'");
                   c.eval.use_momentum = v == "momentum";
                 },
                 [](const C& c) { return std::string(c.eval.use_momentum ? "momentum" : "online"); }});
    k.push_back(int_list<int>("eval.k", [](C& c) -> auto& { return c.eval.ks; }, 1, 1000000, 16));
    k.push_back(real("eval.knn_temperature", [](C& c) -> auto& { return c.eval.knn_temperature; }, 0.0, 10.0, true));
    k.push_back(integer("eval.consistency_k", [](C& c) -> auto& { return c.eval.consistency_k; }, 1, 1000000));
    k.push_back(integer("eval.linear_epochs", [](C& c) -> auto& { return c.eval.linear_epochs; }, 1, 100000));
    k.push_back(real("eval.linear_lr", [](C& c) -> auto& { return c.eval.linear_lr; }, 0.0, 100.0, true));
    k.push_back(integer("eval.linear_batch", [](C& c) -> auto& { return c.eval.linear_batch; }, 1, 1000000));
    k.push_back(integer("eval.mad_images", [](C& c) -> auto& { return c.eval.mad_images; }, 1, 1000000));
    k.push_back(integer("eval.feature_batch", [](C& c) -> auto& { return c.eval.feature_batch; }, 1, 1000000));
    return k;
  }();
  return keys;
}

const KeyDef& find_key(const std::string& key) {
  for (const auto& k : registry())
    if (k.name == key) return k;
  throw Error(ErrorCode::Config, key + ": unknown key");
}

}  // namespace

Assignments read_ini(const std::string& text) {
  Assignments out;
  std::istringstream in(text);
  std::string section, line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find_first_of("#;");
    line = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": expected key = value");
    if (section.empty()) throw Error(ErrorCode::Config, "line " + std::to_string(n) + ": key outside any [section]");
    out.emplace_back(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

void set_key(Config& config, const std::string& key, const std::string& value) { find_key(key).set(config, value); }

std::string get_key(const Config& config, const std::string& key) { return find_key(key).get(config); }

Config resolve(const Assignments& all, bool check) {
  for (const auto& [k, v] : all) find_key(k);  // reject unknown keys before anything else
  Config c;
  for (const auto& [k, v] : all)
    if (k == "model1.arch" || k == "model2.arch") set_key(c, k, v);
  const auto a1 = c.train.models[0].network.arch, a2 = c.train.models[1].network.arch;
  const bool same = a1 == a2;
  c.train.models[0] = trainer::default_model(a1, same || a1 == models::Arch::Vit ? 1.0 : 0.1);
  c.train.models[1] = trainer::default_model(a2, same || a2 == models::Arch::Vit ? 1.0 : 0.1);
  for (const auto& [k, v] : all) set_key(c, k, v);

  if (c.data_path.empty()) {
    if (const char* root = std::getenv(kDataRootEnv)) c.data_path = root;
  }
  if (check) validate(c);
  return c;
}

Config parse_config_text(const std::string& ini, const std::vector<std::string>& overrides) {
  Assignments all = read_ini(ini);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, "override '" + o + "': expected section.key=value");
    all.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  return resolve(all);
}

Config parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  std::string text;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::Io, "cannot read config file " + file.string());
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return parse_config_text(text, overrides);
}

std::string to_ini(const Config& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : registry()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << k.name.substr(dot + 1) << " = " << k.get(config) << '\n';
  }
  return os.str();
}

void validate(const Config& c) {
  trainer::validate(c.train);
  if (c.eval.model_a < 1 || c.eval.model_a > 2 || c.eval.model_b < 1 || c.eval.model_b > 2) {
    throw Error(ErrorCode::Config, "eval.model_a: model indices are 1 or 2");
  }
}

}  // namespace mokd::cli
