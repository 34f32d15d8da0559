#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mlq {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Key = 64-bit seed; counter = (block, stream, sample lo, sample hi), so every
// (seed, sample, stream) triple addresses an independent, reproducible sequence.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t sample, std::uint32_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{0u, stream, static_cast<std::uint32_t>(sample),
             static_cast<std::uint32_t>(sample >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      out_ = bijection(ctr_, key_);
      ++ctr_[0];
      pos_ = 0;
    }
    return out_[pos_++];
  }

  /// 53-bit uniform in (0, 1).
  double uniform() {
    std::uint64_t a = (*this)() >> 5;
    std::uint64_t b = (*this)() >> 6;
    return (static_cast<double>(a * 67108864ull + b) + 0.5) * (1.0 / 9007199254740992.0);
  }

  static Block bijection(Block ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  Key key_;
  Block ctr_;
  Block out_{};
  int pos_ = 4;
};

/// Stream id for a scale band [lo, hi); bands with equal edges share a stream.
std::uint32_t band_stream(double u_lo, double u_hi);

}  // namespace mlq
