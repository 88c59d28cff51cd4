#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace margincert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Class id used when margins of all classes are pooled into one GMM.
inline constexpr int kPooledClass = -1;

// Raised by config parsing; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a pipeline stage fails; carries the stage name (exit code 2).
struct StageError : std::runtime_error {
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error(what), stage(std::move(stage_name)) {}
  std::string stage;
};

// FNV-1a. Used for seed derivation and content hashes; stable across
// platforms, unlike std::hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Stage seeds hash (master, stage-name) so adding a stage does not perturb
// the streams of earlier stages.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  std::uint64_t h = fnv1a64(&master, sizeof master);
  return fnv1a64(stage, h);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

}  // namespace margincert
