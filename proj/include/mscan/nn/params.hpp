#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscan/types.hpp"

namespace mscan::nn {

// Flat view into one named parameter array and its gradient. `trainable`
// distinguishes optimizer-visible weights from buffers (running statistics),
// which are still checkpointed and hashed.
template <typename S>
struct ParamView {
  std::string name;
  S* value = nullptr;
  S* grad = nullptr;
  Eigen::Index size = 0;
  bool trainable = true;
};

template <typename S>
using ParamList = std::vector<ParamView<S>>;

template <typename S>
void add_param(ParamList<S>& out, const std::string& name, Mat<S>& value,
               Mat<S>& grad, bool trainable = true) {
  out.push_back({name, value.data(), grad.data(), value.size(), trainable});
}

template <typename S>
void add_param(ParamList<S>& out, const std::string& name, Vec<S>& value,
               Vec<S>& grad, bool trainable = true) {
  out.push_back({name, value.data(), grad.data(), value.size(), trainable});
}

template <typename S>
void zero_grads(ParamList<S>& params) {
  for (auto& p : params)
    if (p.trainable && p.grad) Eigen::Map<Vec<S>>(p.grad, p.size).setZero();
}

template <typename S>
Eigen::Index param_count(const ParamList<S>& params, bool trainable_only = true) {
  Eigen::Index total = 0;
  for (const auto& p : params)
    if (!trainable_only || p.trainable) total += p.size;
  return total;
}

// FNV-1a over the parameter bytes in registry order; used to assert that
// frozen models do not move during downstream training.
template <typename S>
std::uint64_t param_hash(const ParamList<S>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value);
    const size_t nbytes = static_cast<size_t>(p.size) * sizeof(S);
    for (size_t i = 0; i < nbytes; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace mscan::nn
