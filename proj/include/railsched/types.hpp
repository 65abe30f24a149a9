#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace railsched {

// Dense math types, templated on scalar so numeric kernels stay generic.
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

using TimeSec = std::int64_t;  // integer seconds since simulation start
using PlatformId = int;
using DepotId = int;
using SlotIdx = int;  // per-platform service slot index

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d649bb133111ebull;
  return x ^ (x >> 31);
}

// FNV-1a over bytes; used for stream tags and config hashes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Per-component RNG stream derived from one master seed. The (component,
// index) pair fully determines the stream, independent of thread count or
// evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index = 0) {
  return splitmix64(master ^ fnv1a(component) ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

}  // namespace railsched
