#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "hubbind/numerics.hpp"

namespace hubbind {

/// 64-bit FNV-1a. Used for stream keys and config hashes; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based random stream.
///
/// Draw number c of stream (seed, name) is mix64(key(seed, name) + c * golden).
/// Every value is therefore a pure function of (seed, name, counter); two
/// streams with different names never share state. Normals use Box-Muller
/// over our own uniforms so outputs do not depend on the standard library's
/// distribution implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string name);

  const std::string& name() const noexcept { return name_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Derived stream "<name>/<suffix>" with the same seed.
  RngStream child(std::string_view suffix) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

 private:
  std::uint64_t seed_;
  std::string name_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hubbind
