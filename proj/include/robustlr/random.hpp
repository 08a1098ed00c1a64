#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace rlr {

// Counter-based generator: output k is splitmix64(key + k * golden).
// Satisfies UniformRandomBitGenerator so it plugs into <random>
// distributions. Substreams are derived by hashing the parent key with a tag
// and index, so the draw sequence of one substream never depends on how many
// values another substream consumed.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + (++counter_) * kGolden); }

    // Independent child stream identified by (tag, index).
    [[nodiscard]] CounterRng substream(std::uint64_t tag, std::uint64_t index = 0) const {
        return CounterRng(mix(mix(key_ ^ mix(tag + kGolden)) + index * kGolden + 1));
    }

    [[nodiscard]] std::uint64_t key() const { return key_; }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Marsaglia's polar method; no cached second value
    // so the stream position is a pure function of the number of calls.
    double normal();

    static std::uint64_t mix(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Stream tags used across the library.
namespace stream {
inline constexpr std::uint64_t kSubsets = 0x5355425345545321ULL;   // Step 0 subsets
inline constexpr std::uint64_t kBootstrap = 0x424f4f5453545250ULL; // wild-bootstrap signs
inline constexpr std::uint64_t kData = 0x53494d4441544121ULL;      // simulated data sets
} // namespace stream

// k distinct indices drawn uniformly from [0, n), returned sorted.
std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n, std::size_t k);

} // namespace rlr
