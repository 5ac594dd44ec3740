#pragma once

#include <cstdint>

namespace ddnf {

/// Counter-based generator: output n is a SplitMix64 hash of (key, n).
/// Streams derived with split() are independent of the parent's counter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  Rng split(std::uint64_t stream) const;
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ddnf
