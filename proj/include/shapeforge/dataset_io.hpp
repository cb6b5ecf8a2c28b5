#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapeforge/synth.hpp"

namespace shapeforge {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// hashing

inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(dlen * 2);
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

inline std::string sha256_hex_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_DigestFinal_ex(ctx, digest, &dlen);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// little-endian scalar packing

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline uint8_t quantize(float v) {
  double x = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(255.0 * x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dataset binary format: magic "SFDS", u32 version=1, u32 count, u16 height,
// u16 width, u16 channels, then per record u16 shape_class, u16 texture_class,
// h*w*c pixel bytes (round(255*v)), h*w mask bytes (0/255). Little-endian.

inline constexpr uint32_t kDatasetFormatVersion = 1;

inline std::string encode_dataset(const std::vector<SynthSample>& samples) {
  if (samples.empty()) throw ConfigError("encode_dataset: no samples");
  const Image& first = samples.front().image;
  std::string out;
  out += "SFDS";
  detail::put_le<uint32_t>(out, kDatasetFormatVersion);
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(samples.size()));
  detail::put_le<uint16_t>(out, static_cast<uint16_t>(first.height));
  detail::put_le<uint16_t>(out, static_cast<uint16_t>(first.width));
  detail::put_le<uint16_t>(out, static_cast<uint16_t>(first.channels));
  for (const auto& s : samples) {
    if (!s.image.same_shape(first))
      throw ConfigError("encode_dataset: mixed image shapes");
    detail::put_le<uint16_t>(out, static_cast<uint16_t>(s.shape_class));
    detail::put_le<uint16_t>(out, static_cast<uint16_t>(s.texture_class));
    for (float v : s.image.data) out.push_back(static_cast<char>(detail::quantize(v)));
    for (std::size_t i = 0; i < static_cast<std::size_t>(first.height) * first.width; ++i)
      out.push_back(static_cast<char>(i < s.mask.size() && s.mask[i] ? 255 : 0));
  }
  return out;
}

inline std::vector<SynthSample> decode_dataset(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 18 || std::memcmp(p, "SFDS", 4) != 0)
    throw VersionMismatch("dataset: bad magic or truncated header");
  uint32_t version = detail::get_le<uint32_t>(p + 4);
  if (version != kDatasetFormatVersion)
    throw VersionMismatch("dataset: format version " + std::to_string(version) +
                          ", expected " + std::to_string(kDatasetFormatVersion));
  uint32_t count = detail::get_le<uint32_t>(p + 8);
  int h = detail::get_le<uint16_t>(p + 12);
  int w = detail::get_le<uint16_t>(p + 14);
  int c = detail::get_le<uint16_t>(p + 16);
  const std::size_t pix = static_cast<std::size_t>(h) * w * c;
  const std::size_t msk = static_cast<std::size_t>(h) * w;
  const std::size_t rec = 4 + pix + msk;
  if (bytes.size() != 18 + rec * count)
    throw VersionMismatch("dataset: size " + std::to_string(bytes.size()) +
                          " does not match header count " + std::to_string(count));
  std::vector<SynthSample> samples(count);
  const unsigned char* q = p + 18;
  for (uint32_t i = 0; i < count; ++i) {
    SynthSample& s = samples[i];
    s.shape_class = detail::get_le<uint16_t>(q);
    s.texture_class = detail::get_le<uint16_t>(q + 2);
    q += 4;
    s.image = Image(h, w, c);
    for (std::size_t j = 0; j < pix; ++j) s.image.data[j] = q[j] / 255.0f;
    q += pix;
    s.mask.resize(msk);
    for (std::size_t j = 0; j < msk; ++j) s.mask[j] = q[j] ? 1 : 0;
    q += msk;
  }
  return samples;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline json manifest_to_json(const DatasetManifest& m) {
  return json{{"split_name", m.split_name},
              {"mode", m.mode},
              {"count", m.count},
              {"shape_class_counts", m.shape_class_counts},
              {"texture_class_counts", m.texture_class_counts},
              {"seed", m.seed},
              {"format_version", m.format_version},
              {"sha256", m.sha256}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.split_name = j.at("split_name").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.count = j.at("count").get<uint32_t>();
  for (int i = 0; i < kNumClasses; ++i) {
    m.shape_class_counts[i] = j.at("shape_class_counts").at(i).get<uint32_t>();
    m.texture_class_counts[i] = j.at("texture_class_counts").at(i).get<uint32_t>();
  }
  m.seed = j.at("seed").get<uint64_t>();
  m.format_version = j.at("format_version").get<uint32_t>();
  m.sha256 = j.at("sha256").get<std::string>();
  return m;
}

/// Writes the binary plus a `<path>.manifest.json` sidecar carrying the
/// manifest fields and the binary's SHA-256. Returns the completed manifest.
inline DatasetManifest write_dataset(const std::string& path,
                                     const std::vector<SynthSample>& samples,
                                     DatasetManifest manifest) {
  std::string bytes = encode_dataset(samples);
  manifest.count = static_cast<uint32_t>(samples.size());
  manifest.format_version = kDatasetFormatVersion;
  manifest.sha256 = sha256_hex(bytes);
  write_file(path, bytes);
  write_file(path + ".manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

inline std::vector<SynthSample> read_dataset(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingDataset("dataset not found: " + path);
  return decode_dataset(read_file(path));
}

inline DatasetManifest read_manifest(const std::string& dataset_path) {
  std::string mpath = dataset_path + ".manifest.json";
  if (!std::filesystem::exists(mpath))
    throw MissingDataset("manifest not found: " + mpath);
  return manifest_from_json(json::parse(read_file(mpath)));
}

}  // namespace shapeforge
