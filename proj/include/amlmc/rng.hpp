#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace amlmc {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// the output is a pure function of (counter, key).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// SplitMix64 finalizer; used to derive independent seeds from structured ids.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD6E8FEB86659FD93ull));
}

/// Which family of variables a stream feeds. Part of the counter, so streams
/// with different tags never overlap.
enum class StreamTag : std::uint8_t {
  Brownian = 0,
  Auxiliary = 1,      // independent auxiliary Brownian motion
  TimeIntegral = 2,   // conditional part of the time integral of B
  Resample = 3,
  Exact = 4,          // test oracles (exact transitions)
  Synthetic = 5,      // synthetic observation data
};

/// Stream coordinates. Layout of the Philox input:
///   key     = (seed lo, seed hi)
///   counter = (step, level:8 | tag:8 | block:16, sample lo, sample hi)
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  std::uint32_t level = 0;
  std::uint32_t step = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Sequential view over one (key, tag) stream: uniforms in (0,1) and standard
/// normals (Box-Muller, two per Philox block). Period 2^33 uniforms.
class CounterStream {
 public:
  CounterStream(const StreamKey& key, StreamTag tag) noexcept : key_(key), tag_(tag) {}

  double uniform() noexcept {
    if (uniform_cursor_ == 2) refill();
    return uniforms_[uniform_cursor_++];
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  void refill() noexcept {
    const Philox4x32::Counter ctr{
        key_.step,
        ((key_.level & 0xFFu) << 24) | (static_cast<std::uint32_t>(tag_) << 16) | (block_ & 0xFFFFu),
        static_cast<std::uint32_t>(key_.sample), static_cast<std::uint32_t>(key_.sample >> 32)};
    // Past 2^16 blocks the overflow moves into the key, so long streams do
    // not wrap while the first 2^16 blocks keep their original values.
    const std::uint32_t overflow = block_ >> 16;
    const std::uint64_t seed = overflow == 0 ? key_.seed : derive_seed(key_.seed, 0x424c4b00u, overflow);
    const Philox4x32::Key k{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const auto out = Philox4x32::generate(ctr, k);
    uniforms_[0] = to_unit(out[0], out[1]);
    uniforms_[1] = to_unit(out[2], out[3]);
    uniform_cursor_ = 0;
    ++block_;
  }

  StreamKey key_;
  StreamTag tag_;
  std::uint32_t block_ = 0;
  std::array<double, 2> uniforms_{};
  int uniform_cursor_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace amlmc
