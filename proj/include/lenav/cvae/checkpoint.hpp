#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/model.hpp"

namespace lenav::cvae {

inline constexpr std::array<char, 8> kCheckpointMagic = {'L', 'E', 'N', 'A', 'V', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t config_hash(const ModelConfig& c) { return fnv1a(to_json(c).dump()); }

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
};

namespace detail {
template <class T>
void put_le(std::string& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ParseError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  pos += sizeof(T);
  if constexpr (std::is_same_v<T, double>)
    return std::bit_cast<double>(bits);
  else
    return static_cast<T>(bits);
}
}  // namespace detail

// magic | version u32 | config hash u64 | seed u64 | epoch u32 | config json (u32 len + bytes) | n u64 | f64 x n
inline std::string serialize_checkpoint(const ModelParams& p, std::uint64_t seed, std::uint32_t epoch) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const std::string cfg = to_json(p.config).dump();
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, config_hash(p.config));
  detail::put_le<std::uint64_t>(out, seed);
  detail::put_le<std::uint32_t>(out, epoch);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  detail::put_le<std::uint64_t>(out, p.values.size());
  for (double v : p.values) detail::put_le<double>(out, v);
  return out;
}

inline ModelParams deserialize_checkpoint(const std::string& bytes, CheckpointInfo* info = nullptr) {
  if (bytes.size() < kCheckpointMagic.size() || std::memcmp(bytes.data(), kCheckpointMagic.data(), 8) != 0)
    throw ParseError("not a checkpoint (bad magic)");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  CheckpointInfo ci;
  ci.config_hash = detail::get_le<std::uint64_t>(bytes, pos);
  ci.seed = detail::get_le<std::uint64_t>(bytes, pos);
  ci.epoch = detail::get_le<std::uint32_t>(bytes, pos);
  const auto len = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + len > bytes.size()) throw ParseError("checkpoint truncated");
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(bytes.substr(pos, len)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  pos += len;
  if (config_hash(cfg) != ci.config_hash) throw SchemaError("checkpoint config hash mismatch");
  ModelParams p = make_params(cfg);
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  if (n != p.values.size()) throw SchemaError("checkpoint parameter count does not match its config");
  for (auto& v : p.values) v = detail::get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw ParseError("trailing bytes after checkpoint");
  if (info) *info = ci;
  return p;
}

inline void save_checkpoint(const ModelParams& p, const std::string& path, std::uint64_t seed, std::uint32_t epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const std::string bytes = serialize_checkpoint(p, seed, epoch);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelParams load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, info);
}

}  // namespace lenav::cvae
