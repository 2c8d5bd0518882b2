#pragma once

// Counter-based random streams ("fimest-philox-v1").
//
//   block      Philox4x32-10 with key (seed_lo, seed_hi) and counter
//              (index_lo, index_hi, stream_lo, stream_hi).
//   u64        block word pairs (x0 | x1 << 32) and (x2 | x3 << 32).
//   uniform    ((w >> 12) + 0.5) * 2^-52, strictly inside (0, 1).
//   normal     Box-Muller on the two uniforms of one block:
//              r = sqrt(-2 ln u1), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2).
//              Normal number j of a stream comes from block j / 2.
//   derive     derive_seed(master, a, b) = first u64 of the block with key
//              master and counter (a_lo, a_hi, b_lo, b_hi).
//
// Any implementation that follows these rules reproduces the draws exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fimest {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

namespace detail {

inline Philox4x32Key split_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

inline Philox4x32Counter make_counter(std::uint64_t lo, std::uint64_t hi) {
  return {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
          static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)};
}

inline double to_unit_open(std::uint64_t w) {
  return (static_cast<double>(w >> 12) + 0.5) * 0x1.0p-52;
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  const auto out = philox4x32_10(detail::make_counter(a, b), detail::split_key(master));
  return std::uint64_t{out[0]} | (std::uint64_t{out[1]} << 32);
}

/// Sequential view over one (seed, stream) pair. Cheap to copy; draws are a
/// pure function of (seed, stream, position).
class CounterStream {
 public:
  using result_type = std::uint64_t;

  explicit CounterStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::split_key(seed)), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    if (word_ == 2) refill();
    return words_[word_++];
  }

  double uniform() { return detail::to_unit_open((*this)()); }

  double normal() {
    if (normal_slot_ == 2) {
      refill();
      const double u1 = detail::to_unit_open(words_[0]);
      const double u2 = detail::to_unit_open(words_[1]);
      word_ = 2;
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      normals_ = {r * std::cos(angle), r * std::sin(angle)};
      normal_slot_ = 0;
    }
    return normals_[normal_slot_++];
  }

 private:
  void refill() {
    const auto out = philox4x32_10(detail::make_counter(block_++, stream_), key_);
    words_ = {std::uint64_t{out[0]} | (std::uint64_t{out[1]} << 32),
              std::uint64_t{out[2]} | (std::uint64_t{out[3]} << 32)};
    word_ = 0;
    normal_slot_ = 2;
  }

  Philox4x32Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> words_{};
  std::array<double, 2> normals_{};
  int word_ = 2;
  int normal_slot_ = 2;
};

}  // namespace fimest
