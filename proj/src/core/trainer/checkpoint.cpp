// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>

namespace mokd::trainer {

using namespace engine;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'O', 'K', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* out, std::size_t n) {
    if (n > size_ - pos_) {
      throw Error(ErrorCode::Corruption, "checkpoint ends early at byte " + std::to_string(pos_));
    }
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

struct Entry {
  DType dtype;
  Shape shape;
  std::vector<char> payload;
};

struct Parsed {
  CheckpointInfo info;
  std::array<std::int64_t, 2> optimizer_steps{};
  std::map<std::string, Entry> entries;
};

std::uint32_t crc(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::size_t element_bytes(DType d) { return d == DType::F32 ? 4 : 8; }

Parsed parse(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 4 + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::Corruption, path.string() + " is not a checkpoint (bad magic or too short)");
  }
  Reader head(bytes.data() + sizeof(kMagic), bytes.size() - sizeof(kMagic));
  Parsed p;
  p.info.version = head.get<std::uint32_t>();
  if (p.info.version != kCheckpointVersion) {
    throw Error(ErrorCode::Incompatible, "checkpoint format version " + std::to_string(p.info.version) +
                                             ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (crc(bytes.data(), body) != stored) throw Error(ErrorCode::Corruption, "checkpoint checksum mismatch in " + path.string());

  Reader r(bytes.data() + sizeof(kMagic) + 4, body - sizeof(kMagic) - 4);
  p.info.config_hash = r.get<std::uint64_t>();
  p.info.step = r.get<std::int64_t>();
  p.info.epoch = r.get<std::int64_t>();
  p.info.step_in_epoch = r.get<std::int64_t>();
  p.info.seed = r.get<std::uint64_t>();
  p.optimizer_steps[0] = r.get<std::int64_t>();
  p.optimizer_steps[1] = r.get<std::int64_t>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.raw(name.data(), name.size());
    Entry entry;
    const auto dt = r.get<std::uint8_t>();
    if (dt > 1) throw Error(ErrorCode::Corruption, "unknown dtype tag for " + name);
    entry.dtype = static_cast<DType>(dt);
    entry.shape.resize(r.get<std::uint32_t>());
    for (auto& d : entry.shape) d = r.get<std::int64_t>();
    const auto nbytes = r.get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(numel(entry.shape)) * element_bytes(entry.dtype) || nbytes > r.remaining()) {
      throw Error(ErrorCode::Corruption, "payload size mismatch for " + name);
    }
    entry.payload.resize(nbytes);
    r.raw(entry.payload.data(), nbytes);
    p.info.names.push_back(name);
    p.entries.emplace(std::move(name), std::move(entry));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::Corruption, "trailing bytes after the last checkpoint entry");
  return p;
}

}  // namespace

ParamList state_tensors(const TrainState& s) {
  ParamList out;
  auto add = [&](const ParamList& list) { out.insert(out.end(), list.begin(), list.end()); };
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string n = std::to_string(i + 1);
    add(s.pair.online[i].state("online" + n + "."));
    add(s.pair.momentum[i].state("momentum" + n + "."));
    for (auto p : s.optimizers[i].state()) {
      p.name = "optim" + n + "." + p.name;
      out.push_back(std::move(p));
    }
    out.push_back({"center" + n + ".mlp", s.centers[i][0], false});
    if (s.centers[i][1].defined()) out.push_back({"center" + n + ".t", s.centers[i][1], false});
  }
  return out;
}

void checkpoint_save(const TrainState& s, const std::filesystem::path& path) {
  const ParamList tensors = state_tensors(s);
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(s.config_hash);
  w.put<std::int64_t>(s.step);
  w.put<std::int64_t>(s.epoch);
  w.put<std::int64_t>(s.step_in_epoch);
  w.put<std::uint64_t>(s.seed);
  w.put<std::int64_t>(s.optimizers[0].steps());
  w.put<std::int64_t>(s.optimizers[1].steps());
  w.put<std::uint64_t>(tensors.size());
  for (const auto& p : tensors) {
    require_finite(p.tensor, p.name.c_str());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.raw(p.name.data(), p.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.tensor.dtype()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.ndim()));
    for (auto d : p.tensor.shape()) w.put<std::int64_t>(d);
    const std::uint64_t nbytes = static_cast<std::uint64_t>(p.tensor.numel()) * element_bytes(p.tensor.dtype());
    w.put<std::uint64_t>(nbytes);
    std::visit([&](const auto& v) { w.raw(v.data(), nbytes); }, *p.tensor.values_ptr());
  }
  w.put<std::uint32_t>(crc(w.bytes().data(), w.bytes().size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, "failed writing checkpoint " + tmp.string() + "; previous checkpoint kept");
    }
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo checkpoint_info(const std::filesystem::path& path) { return parse(path).info; }

TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& config, bool force,
                           const std::function<void(const std::string&)>& warn) {
  Parsed p = parse(path);
  TrainState s = init_state(config);
  if (p.info.config_hash != s.config_hash) {
    const std::string msg = "checkpoint " + path.string() + " was written under a different config";
    if (!force) throw Error(ErrorCode::Incompatible, msg + " (pass force to load it anyway)");
    if (warn) {
      warn(msg);
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  }
  const ParamList tensors = state_tensors(s);
  if (tensors.size() != p.entries.size()) {
    throw Error(ErrorCode::Incompatible, "checkpoint holds " + std::to_string(p.entries.size()) + " tensors, config needs " +
                                             std::to_string(tensors.size()));
  }
  for (const auto& t : tensors) {
    auto it = p.entries.find(t.name);
    if (it == p.entries.end()) throw Error(ErrorCode::Incompatible, "checkpoint lacks tensor " + t.name);
    const Entry& e = it->second;
    if (e.shape != t.tensor.shape() || e.dtype != t.tensor.dtype()) {
      throw Error(ErrorCode::Incompatible, "tensor " + t.name + " is " + to_string(e.shape) + " " + to_string(e.dtype) +
                                               " in the checkpoint, " + to_string(t.tensor.shape()) + " " +
                                               to_string(t.tensor.dtype()) + " in the config");
    }
    std::visit([&](auto& v) { std::memcpy(v.data(), e.payload.data(), e.payload.size()); }, *t.tensor.values_ptr());
  }
  s.step = p.info.step;
  s.epoch = p.info.epoch;
  s.step_in_epoch = p.info.step_in_epoch;
  s.seed = p.info.seed;
  s.optimizers[0].set_steps(p.optimizer_steps[0]);
  s.optimizers[1].set_steps(p.optimizer_steps[1]);
  return s;
}

}  // namespace mokd::trainer
