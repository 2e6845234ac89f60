#pragma once

#include <cstdint>
#include <random>

namespace mmdci {

/// SplitMix64 finalizer; used to derive independent substreams from one seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the substream `tag` of a parent stream. All randomness in the
/// toolkit flows from one master seed through nested seed_stream calls, so a
/// run is reproducible for any thread count.
inline std::uint64_t seed_stream(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(splitmix64(parent) ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

// Fixed substream tags (documented in the README).
namespace stream {
inline constexpr std::uint64_t kData = 1;         // DGP sample draws
inline constexpr std::uint64_t kFolds = 2;        // fold assignment permutation
inline constexpr std::uint64_t kTrainX = 3;       // X-generator training
inline constexpr std::uint64_t kTrainY = 4;       // Y-generator training
inline constexpr std::uint64_t kSynth = 5;        // synthetic-draw noise
inline constexpr std::uint64_t kMultipliers = 6;  // wild-bootstrap multipliers
inline constexpr std::uint64_t kRep = 7;          // Monte Carlo replication split
inline constexpr std::uint64_t kPlan = 8;         // sweep plan offsetting
inline constexpr std::uint64_t kHoldout = 9;      // GMMN held-out split + trace noise
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  std::uint64_t next_u64() { return gen_(); }

  /// Child stream derived from this stream's seed; does not consume state.
  Rng spawn(std::uint64_t tag) const { return Rng(seed_stream(seed_, tag)); }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mmdci
