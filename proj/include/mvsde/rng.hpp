#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mvsde {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A draw is a pure
// function of (key, counter), so every particle, step and purpose gets its own
// stream without any shared generator state.
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter round(const Counter& ctr, const Key& key) {
  constexpr std::uint64_t kM0 = 0xD2511F53u;
  constexpr std::uint64_t kM1 = 0xCD9E8D57u;
  const std::uint64_t p0 = kM0 * ctr[0];
  const std::uint64_t p1 = kM1 * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline Counter generate(Counter ctr, Key key) {
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

/// What a stream is used for; part of the counter so purposes never collide.
enum class StreamPurpose : std::uint32_t {
  kDrivingNoise = 0,
  kInitialCloud = 1,
  kOptimizerRestart = 2,
  kAuxiliary = 3,
};

/// Master seed plus the offset added to particle indices to form stream ids.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_offset = 0;

  bool operator==(const RngSpec&) const = default;
};

/// Uniform in the open interval (0,1) built from 53 random bits.
inline double to_open_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a) << 21) ^ (b >> 11);
  return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
}

/// Deterministic stream addressed by (seed, stream id, purpose). `normals(step, out)`
/// fills `out` with iid standard normals that depend only on the address and step.
class CounterStream {
 public:
  CounterStream(const RngSpec& spec, std::uint64_t stream, StreamPurpose purpose)
      : key_{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32)},
        stream_(stream + spec.stream_offset),
        purpose_(static_cast<std::uint32_t>(purpose)) {}

  void normals(std::uint64_t step, std::span<double> out) const {
    std::uint32_t block = 0;
    for (std::size_t k = 0; k < out.size(); k += 2, ++block) {
      const auto r = draw(step, block);
      const double u1 = to_open_unit(r[0], r[1]);
      const double u2 = to_open_unit(r[2], r[3]);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      out[k] = radius * std::cos(angle);
      if (k + 1 < out.size()) out[k + 1] = radius * std::sin(angle);
    }
  }

  double uniform(std::uint64_t step, std::uint32_t block = 0) const {
    const auto r = draw(step, block);
    return to_open_unit(r[0], r[1]);
  }

 private:
  philox::Counter draw(std::uint64_t step, std::uint32_t block) const {
    // Steps are limited to 2^32 and stream ids to 2^60; the top nibble tags the purpose.
    const philox::Counter ctr{block, static_cast<std::uint32_t>(step),
                              static_cast<std::uint32_t>(stream_),
                              (purpose_ << 28) | (static_cast<std::uint32_t>(stream_ >> 32) & 0x0FFFFFFFu)};
    return philox::generate(ctr, key_);
  }

  philox::Key key_;
  std::uint64_t stream_;
  std::uint32_t purpose_;
};

}  // namespace mvsde
