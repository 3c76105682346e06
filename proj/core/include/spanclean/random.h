#pragma once

#include <cstdint>
#include <random>

namespace spanclean {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream id (SplitMix64 finalizer) so per-sentence
// or per-epoch generators are independent and order-free.
uint64_t DeriveSeed(uint64_t base, uint64_t stream);

inline Rng MakeRng(uint64_t base, uint64_t stream) { return Rng(DeriveSeed(base, stream)); }

// Stream tags keep the different consumers of one base seed apart.
enum class Stream : uint64_t {
  kInit = 1,
  kShuffle = 2,
  kDropout = 3,
  kNoise = 4,
  kSynthetic = 5,
  kThresholdPlan = 6,
  kTopNegFallback = 7,
};

inline uint64_t DeriveSeed(uint64_t base, Stream stream, uint64_t index = 0) {
  return DeriveSeed(DeriveSeed(base, static_cast<uint64_t>(stream)), index);
}

}  // namespace spanclean
