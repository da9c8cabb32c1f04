#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace hermflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A draw is a pure function of (key, counter), so any cell of an experiment
/// can be regenerated without replaying a stream.
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static Block encrypt(Block ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += W0;
      key[1] += W1;
    }
    return ctr;
  }

  /// Two 64-bit words for counter index i.
  std::array<std::uint64_t, 2> bits(std::uint64_t i) const {
    Block b = encrypt({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32),
                       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                      key_);
    return {(static_cast<std::uint64_t>(b[1]) << 32) | b[0], (static_cast<std::uint64_t>(b[3]) << 32) | b[2]};
  }

  /// Uniform in (0,1) from the top 53 bits; never returns 0.
  static double to_unit(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

  std::array<double, 2> uniform2(std::uint64_t i) const {
    auto w = bits(i);
    return {to_unit(w[0]), to_unit(w[1])};
  }

  /// Standard normal at index i (Box-Muller on one counter block).
  /// Hand-rolled rather than std::normal_distribution, whose output is not
  /// specified across standard library implementations.
  double normal(std::uint64_t i) const {
    auto [u1, u2] = uniform2(i);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double uniform(std::uint64_t i) const { return to_unit(bits(i)[0]); }

  std::uint64_t stream() const { return stream_; }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
};

/// Sequential view on a Philox stream.
class PhiloxStream {
 public:
  explicit PhiloxStream(std::uint64_t seed, std::uint64_t stream = 0) : gen_(seed, stream) {}
  double uniform() { return gen_.uniform(next_++); }
  double normal() { return gen_.normal(next_++); }
  std::uint64_t next_u64() { return gen_.bits(next_++)[0]; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x < limit) return x % n;
    }
  }

 private:
  Philox gen_;
  std::uint64_t next_ = 0;
};

}  // namespace hermflow
