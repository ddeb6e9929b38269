#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mscan/error.hpp"
#include "mscan/nn/params.hpp"

namespace mscan::nn {

// Single-file checkpoint: magic, format version, a config echo (free-form
// text, normally JSON), then flat named parameter arrays as little-endian
// 32-bit floats in registry order.
inline constexpr std::uint32_t kCheckpointMagic = 0x4e43534d;  // "MSCN"
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const std::string& config,
                     const ParamList<S>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  detail::put(out, kCheckpointMagic);
  detail::put(out, kCheckpointVersion);
  detail::put(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  detail::put(out, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (const auto& p : params) {
    detail::put(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put(out, static_cast<std::uint64_t>(p.size));
    buf.resize(static_cast<size_t>(p.size));
    for (Eigen::Index i = 0; i < p.size; ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(p.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) fail(ErrorCode::IoError, "write failed on " + path.string());
}

struct CheckpointData {
  std::string config;
  std::map<std::string, std::vector<float>> arrays;
};

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  if (detail::get<std::uint32_t>(in) != kCheckpointMagic)
    fail(ErrorCode::IoError, path.string() + ": not a checkpoint file");
  if (detail::get<std::uint32_t>(in) != kCheckpointVersion)
    fail(ErrorCode::IoError, path.string() + ": unsupported checkpoint version");
  CheckpointData data;
  const auto cfg_len = detail::get<std::uint32_t>(in);
  data.config.resize(cfg_len);
  in.read(data.config.data(), cfg_len);
  const auto n = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = detail::get<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto count = detail::get<std::uint64_t>(in);
    std::vector<float> arr(count);
    in.read(reinterpret_cast<char*>(arr.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    data.arrays.emplace(std::move(name), std::move(arr));
  }
  if (!in) fail(ErrorCode::IoError, "truncated checkpoint " + path.string());
  return data;
}

template <typename S>
void load_checkpoint(const std::filesystem::path& path, ParamList<S>& params,
                     std::string* config_out = nullptr) {
  const CheckpointData data = read_checkpoint(path);
  if (config_out) *config_out = data.config;
  for (auto& p : params) {
    const auto it = data.arrays.find(p.name);
    if (it == data.arrays.end())
      fail(ErrorCode::IoError, path.string() + ": missing parameter " + p.name);
    if (static_cast<Eigen::Index>(it->second.size()) != p.size)
      fail(ErrorCode::ShapeMismatch, path.string() + ": size mismatch for " + p.name);
    for (Eigen::Index i = 0; i < p.size; ++i)
      p.value[i] = static_cast<S>(it->second[static_cast<size_t>(i)]);
  }
}

}  // namespace mscan::nn
