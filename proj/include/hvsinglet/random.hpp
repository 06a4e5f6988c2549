#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hv {

/// Counter-based random stream (Philox4x32-10).
///
/// The 64-bit seed is the Philox key and the stream id occupies the upper
/// half of the 128-bit counter, so every (seed, stream_id) pair addresses a
/// disjoint sequence of 2^64 blocks. Draws depend only on (seed, stream_id,
/// position), never on scheduling, which is what lets parallel workers
/// reproduce serial runs bit for bit.
///
/// Satisfies UniformRandomBitGenerator, but callers inside this library use
/// uniform01() so results do not depend on the standard library's
/// distribution implementations.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Stream for a sub-task, keyed by the same seed. Mixing keeps ids from
  /// nested derivations (check index, pair index, chunk index) from colliding.
  RandomStream derive(std::uint64_t sub_id) const;

  /// Raw Philox4x32-10 block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                                    std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // remaining 64-bit words in buffer_
};

}  // namespace hv
