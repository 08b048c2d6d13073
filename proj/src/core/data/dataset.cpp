// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "data/augment.hpp"

namespace mokd::data {

namespace fs = std::filesystem;

const char* to_string(Format format) { return format == Format::CifarBinary ? "cifar-binary" : "image-directory"; }

Format parse_format(const std::string& name) {
  if (name == "cifar-binary") return Format::CifarBinary;
  if (name == "image-directory") return Format::ImageDirectory;
  throw Error(ErrorCode::Usage, "unknown dataset format '" + name + "' (expected cifar-binary or image-directory)");
}

void LabeledDataset::truncate(std::size_t n) {
  if (n == 0 || n >= images.size()) return;
  images.resize(n);
  labels.resize(n);
}

namespace {

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledDataset load_cifar_binary(const std::vector<fs::path>& files) {
  if (files.empty()) throw Error(ErrorCode::Io, "no CIFAR batch files given");
  LabeledDataset d;
  d.classes = 10;
  for (int c = 0; c < 10; ++c) d.class_names.push_back(std::to_string(c));
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    const std::size_t full = bytes.size() / kCifarRecordBytes;
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw Error(ErrorCode::Format, f.string() + ": truncated record at byte offset " +
                                         std::to_string(full * kCifarRecordBytes) + " (file has " +
                                         std::to_string(bytes.size()) + " bytes)");
    }
    for (std::size_t r = 0; r < full; ++r) {
      const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * kCifarRecordBytes;
      if (rec[0] >= 10) {
        throw Error(ErrorCode::Format, f.string() + ": label " + std::to_string(rec[0]) + " out of range at byte offset " +
                                           std::to_string(r * kCifarRecordBytes));
      }
      Image img;
      img.height = img.width = kCifarSide;
      img.pixels.assign(rec + 1, rec + 1 + 3 * plane);
      d.images.push_back(std::move(img));
      d.labels.push_back(rec[0]);
    }
  }
  if (d.images.empty()) throw Error(ErrorCode::Format, "CIFAR files hold no records");
  return d;
}

namespace {

// Reads whitespace/comment separated PPM header tokens.
std::string ppm_token(const std::vector<char>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos]))) tok += b[pos++];
  return tok;
}

Image read_ppm(const fs::path& path) {
  const auto b = read_file(path);
  std::size_t pos = 0;
  if (ppm_token(b, pos) != "P6") throw Error(ErrorCode::Format, path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ppm_token(b, pos));
    h = std::stoi(ppm_token(b, pos));
    maxval = std::stoi(ppm_token(b, pos));
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::Format, path.string() + ": unsupported PPM geometry or depth");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (b.size() < pos + n) {
    throw Error(ErrorCode::Format, path.string() + ": pixel data truncated at byte offset " + std::to_string(b.size()));
  }
  Image img;
  img.height = h;
  img.width = w;
  img.pixels.resize(n);
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[c * plane + i] = static_cast<std::uint8_t>(b[pos + i * 3 + c]);
  return img;
}

}  // namespace

LabeledDataset load_image_directory(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, "image directory " + root.string() + " does not exist");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  LabeledDataset d;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) continue;
    const int label = d.classes++;
    d.class_names.push_back(dir.filename().string());
    for (const auto& f : files) {
      d.images.push_back(read_ppm(f));
      d.labels.push_back(label);
    }
  }
  if (d.images.empty()) throw Error(ErrorCode::Io, "no .ppm images under " + root.string());
  return d;
}

LabeledDataset load_dataset(const fs::path& path, Format format, Split split) {
  if (format == Format::ImageDirectory) return load_image_directory(path);
  if (fs::is_regular_file(path)) return load_cifar_binary({path});
  if (!fs::is_directory(path)) throw Error(ErrorCode::Io, "dataset path " + path.string() + " does not exist");
  std::vector<fs::path> files;
  if (split == Split::Test) {
    files.push_back(path / "test_batch.bin");
  } else {
    for (const auto& e : fs::directory_iterator(path)) {
      const auto name = e.path().filename().string();
      if (name.starts_with("data_batch_") && name.ends_with(".bin")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  for (const auto& f : files)
    if (!fs::exists(f)) throw Error(ErrorCode::Io, "missing CIFAR file " + f.string());
  if (files.empty()) throw Error(ErrorCode::Io, "no data_batch_*.bin files in " + path.string());
  return load_cifar_binary(files);
}

void write_ppm(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.put(static_cast<char>(image.pixels[c * plane + i]));
}

engine::Tensor eval_batch(const LabeledDataset& data, std::size_t begin, std::size_t end, int side, engine::DType dtype) {
  const auto n = static_cast<std::int64_t>(end - begin);
  const std::size_t per = 3 * static_cast<std::size_t>(side) * side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::vector<float> buf(per * static_cast<std::size_t>(n));
  for (std::size_t i = begin; i < end; ++i) {
    const Image& img = data.images[i];
    std::span<float> dst(buf.data() + (i - begin) * per, per);
    resized_crop(img, 0, 0, img.height, img.width, side, dst);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < plane; ++k) dst[c * plane + k] = (dst[c * plane + k] - kChannelMean[c]) / kChannelStd[c];
  }
  engine::Tensor t = engine::Tensor::from_buffer({n, 3, side, side}, std::move(buf));
  return dtype == engine::DType::F32 ? t : t.to(dtype);
}

}  // namespace mokd::data
