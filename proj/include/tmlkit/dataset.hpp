#pragma once

// Dataset handling: IDX ingestion, class filtering, raw/persistence-image
// preprocessing, and the on-disk persistence-image cache.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "tmlkit/imageops.hpp"
#include "tmlkit/persistence_image.hpp"

namespace tml {

struct DatasetSplit {
  int channels = 0, height = 0, width = 0;
  std::vector<float> images;  // [N][C][H][W]
  std::vector<int32_t> labels;
  std::string kind;  // "gray" | "raw" | "pi"
  std::string provenance;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t sample_numel() const {
    return static_cast<int64_t>(channels) * height * width;
  }
  const float* sample(int64_t i) const {
    return images.data() + i * sample_numel();
  }
};

namespace detail {

inline void put_u32be(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v >> 24));
  s.push_back(static_cast<char>(v >> 16));
  s.push_back(static_cast<char>(v >> 8));
  s.push_back(static_cast<char>(v));
}

inline uint32_t get_u32be(const std::string& s, size_t at) {
  return (static_cast<uint32_t>(static_cast<uint8_t>(s[at])) << 24) |
         (static_cast<uint32_t>(static_cast<uint8_t>(s[at + 1])) << 16) |
         (static_cast<uint32_t>(static_cast<uint8_t>(s[at + 2])) << 8) |
         static_cast<uint32_t>(static_cast<uint8_t>(s[at + 3]));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace detail

// IDX (big-endian): magic 0x00000803 + count/rows/cols for images,
// 0x00000801 + count for labels, u8 payload.
inline void write_idx_images(const std::string& path,
                             const std::vector<uint8_t>& pixels, int count,
                             int rows, int cols) {
  if (static_cast<int64_t>(pixels.size()) !=
      static_cast<int64_t>(count) * rows * cols)
    throw std::invalid_argument("idx write: pixel count mismatch");
  std::string out;
  detail::put_u32be(out, 0x00000803u);
  detail::put_u32be(out, static_cast<uint32_t>(count));
  detail::put_u32be(out, static_cast<uint32_t>(rows));
  detail::put_u32be(out, static_cast<uint32_t>(cols));
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  detail::write_file(path, out);
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<uint8_t>& labels) {
  std::string out;
  detail::put_u32be(out, 0x00000801u);
  detail::put_u32be(out, static_cast<uint32_t>(labels.size()));
  out.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  detail::write_file(path, out);
}

inline DatasetSplit load_mnist_idx(const std::string& image_path,
                                   const std::string& label_path) {
  auto imgs = detail::read_file(image_path);
  auto labs = detail::read_file(label_path);
  if (imgs.size() < 16)
    throw std::runtime_error(image_path + ": truncated header, expected 16 bytes, got " +
                             std::to_string(imgs.size()));
  if (labs.size() < 8)
    throw std::runtime_error(label_path + ": truncated header, expected 8 bytes, got " +
                             std::to_string(labs.size()));
  uint32_t imagic = detail::get_u32be(imgs, 0);
  uint32_t lmagic = detail::get_u32be(labs, 0);
  if (imagic != 0x00000803u)
    throw std::runtime_error(image_path + ": bad image magic " +
                             std::to_string(imagic));
  if (lmagic != 0x00000801u)
    throw std::runtime_error(label_path + ": bad label magic " +
                             std::to_string(lmagic));
  uint32_t n = detail::get_u32be(imgs, 4);
  uint32_t rows = detail::get_u32be(imgs, 8);
  uint32_t cols = detail::get_u32be(imgs, 12);
  uint32_t ln = detail::get_u32be(labs, 4);
  if (n != ln)
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " +
                             std::to_string(ln) + " labels");
  uint64_t need = 16ull + static_cast<uint64_t>(n) * rows * cols;
  if (imgs.size() != need)
    throw std::runtime_error(image_path + ": expected " +
                             std::to_string(need) + " bytes, got " +
                             std::to_string(imgs.size()));
  if (labs.size() != 8ull + ln)
    throw std::runtime_error(label_path + ": expected " +
                             std::to_string(8ull + ln) + " bytes, got " +
                             std::to_string(labs.size()));

  DatasetSplit split;
  split.channels = 1;
  split.height = static_cast<int>(rows);
  split.width = static_cast<int>(cols);
  split.kind = "gray";
  split.provenance = image_path;
  split.images.resize(static_cast<size_t>(n) * rows * cols);
  for (size_t i = 0; i < split.images.size(); ++i)
    split.images[i] =
        static_cast<float>(static_cast<uint8_t>(imgs[16 + i])) / 255.0f;
  split.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i)
    split.labels[i] = static_cast<uint8_t>(labs[8 + i]);
  return split;
}

// Order-preserving class filter; label i of `keep` remaps to index i.
inline DatasetSplit filter_classes(const DatasetSplit& split,
                                   const std::vector<int32_t>& keep) {
  DatasetSplit out;
  out.channels = split.channels;
  out.height = split.height;
  out.width = split.width;
  out.kind = split.kind;
  out.provenance = split.provenance;
  const int64_t sn = split.sample_numel();
  for (int64_t i = 0; i < split.size(); ++i) {
    auto it = std::find(keep.begin(), keep.end(), split.labels[i]);
    if (it == keep.end()) continue;
    out.labels.push_back(static_cast<int32_t>(it - keep.begin()));
    out.images.insert(out.images.end(), split.sample(i),
                      split.sample(i) + sn);
  }
  return out;
}

// Grayscale -> bilinear resize to target, replicated to 3 channels.
inline DatasetSplit raw_preprocess(const DatasetSplit& split, int target = 32) {
  if (split.channels != 1)
    throw std::invalid_argument("raw preprocess: expected grayscale input");
  DatasetSplit out;
  out.channels = 3;
  out.height = out.width = target;
  out.kind = "raw";
  out.provenance = split.provenance + " raw3x" + std::to_string(target);
  out.labels = split.labels;
  const int64_t sn = static_cast<int64_t>(target) * target;
  out.images.reserve(split.size() * 3 * sn);
  for (int64_t i = 0; i < split.size(); ++i) {
    std::vector<float> img(split.sample(i), split.sample(i) + split.sample_numel());
    auto resized = resize_bilinear(img, split.height, split.width, target, target);
    for (int c = 0; c < 3; ++c)
      out.images.insert(out.images.end(), resized.begin(), resized.end());
  }
  return out;
}

// Grayscale or RGB -> persistence-image stack at the params resolution,
// each channel then resized to target.
inline DatasetSplit pi_preprocess(const DatasetSplit& split,
                                  const PIParams& params, int target = 32) {
  DatasetSplit out;
  out.channels = 2 * split.channels;
  out.height = out.width = target;
  out.kind = "pi";
  out.provenance = split.provenance + " pi" + std::to_string(params.res_h) +
                   "to" + std::to_string(target);
  out.labels = split.labels;
  const int64_t sn = static_cast<int64_t>(target) * target;
  out.images.reserve(split.size() * out.channels * sn);
  for (int64_t i = 0; i < split.size(); ++i) {
    std::vector<float> img(split.sample(i),
                           split.sample(i) + split.sample_numel());
    auto stack = image_to_pi_stack(img, split.channels, split.height,
                                   split.width, params);
    for (int c = 0; c < stack.channels; ++c) {
      std::vector<float> plane(
          stack.data.begin() + static_cast<size_t>(c) * stack.res_h * stack.res_w,
          stack.data.begin() +
              static_cast<size_t>(c + 1) * stack.res_h * stack.res_w);
      auto resized =
          resize_bilinear(plane, stack.res_h, stack.res_w, target, target);
      out.images.insert(out.images.end(), resized.begin(), resized.end());
    }
  }
  return out;
}

namespace detail {

template <typename T>
void put_raw(std::string& s, T v) {
  // Fixed-width little-endian scalar append (host is little-endian x86).
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  s.append(buf, sizeof(T));
}

template <typename T>
T get_raw(const std::string& s, size_t& at) {
  if (at + sizeof(T) > s.size())
    throw std::runtime_error("cache file: truncated at byte " +
                             std::to_string(at));
  T v;
  std::memcpy(&v, s.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace detail

// "PICH" cache: version, PIParams snapshot, N/C/H/W, f32 payload, i32 labels.
inline void save_pi_cache(const DatasetSplit& split, const PIParams& params,
                          const std::string& path) {
  std::string out = "PICH";
  detail::put_raw<uint32_t>(out, 1);
  detail::put_raw<int32_t>(out, params.res_h);
  detail::put_raw<int32_t>(out, params.res_w);
  detail::put_raw<double>(out, params.sigma);
  detail::put_raw<double>(out, params.weight_power);
  detail::put_raw<double>(out, params.birth_lo);
  detail::put_raw<double>(out, params.birth_hi);
  detail::put_raw<double>(out, params.pers_lo);
  detail::put_raw<double>(out, params.pers_hi);
  detail::put_raw<double>(out, params.essential_death);
  detail::put_raw<uint32_t>(out, static_cast<uint32_t>(split.size()));
  detail::put_raw<uint32_t>(out, static_cast<uint32_t>(split.channels));
  detail::put_raw<uint32_t>(out, static_cast<uint32_t>(split.height));
  detail::put_raw<uint32_t>(out, static_cast<uint32_t>(split.width));
  out.append(reinterpret_cast<const char*>(split.images.data()),
             split.images.size() * sizeof(float));
  for (int32_t l : split.labels) detail::put_raw<int32_t>(out, l);
  detail::write_file(path, out);
}

inline DatasetSplit load_pi_cache(const std::string& path,
                                  const PIParams& expected) {
  auto data = detail::read_file(path);
  if (data.size() < 4 || data.compare(0, 4, "PICH") != 0)
    throw std::runtime_error(path + ": not a persistence-image cache");
  size_t at = 4;
  auto version = detail::get_raw<uint32_t>(data, at);
  if (version != 1)
    throw std::runtime_error(path + ": unsupported cache version " +
                             std::to_string(version));
  PIParams stored;
  stored.res_h = detail::get_raw<int32_t>(data, at);
  stored.res_w = detail::get_raw<int32_t>(data, at);
  stored.sigma = detail::get_raw<double>(data, at);
  stored.weight_power = detail::get_raw<double>(data, at);
  stored.birth_lo = detail::get_raw<double>(data, at);
  stored.birth_hi = detail::get_raw<double>(data, at);
  stored.pers_lo = detail::get_raw<double>(data, at);
  stored.pers_hi = detail::get_raw<double>(data, at);
  stored.essential_death = detail::get_raw<double>(data, at);
  if (!(stored == expected))
    throw std::runtime_error(
        path + ": cache was built with different persistence-image "
               "parameters; recompute required");
  auto n = detail::get_raw<uint32_t>(data, at);
  auto c = detail::get_raw<uint32_t>(data, at);
  auto h = detail::get_raw<uint32_t>(data, at);
  auto w = detail::get_raw<uint32_t>(data, at);
  uint64_t payload = static_cast<uint64_t>(n) * c * h * w;
  uint64_t need = at + payload * sizeof(float) + n * sizeof(int32_t);
  if (data.size() != need)
    throw std::runtime_error(path + ": expected " + std::to_string(need) +
                             " bytes, got " + std::to_string(data.size()));
  DatasetSplit split;
  split.channels = static_cast<int>(c);
  split.height = static_cast<int>(h);
  split.width = static_cast<int>(w);
  split.kind = "pi";
  split.provenance = path;
  split.images.resize(payload);
  std::memcpy(split.images.data(), data.data() + at,
              payload * sizeof(float));
  at += payload * sizeof(float);
  split.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i)
    split.labels[i] = detail::get_raw<int32_t>(data, at);
  return split;
}

}  // namespace tml
