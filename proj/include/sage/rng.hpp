#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sage {

// Deterministic counter-based generator (splitmix64 core). The same seed
// produces the same draw sequence on every platform; nothing here depends
// on libstdc++ distribution internals.
//
// Documented draw granularity:
//   - next_u64()   consumes 1 state advance
//   - uniform()    consumes 1 draw, returns [0, 1)
//   - normal()     consumes exactly 2 draws (Box-Muller, no caching)
//   - fork(...)    consumes nothing on the parent
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. Always consumes two uniforms so the
    // draw count per call is fixed.
    double normal();

    // Bernoulli(p); consumes one uniform.
    bool bernoulli(double p) { return uniform() < p; }

    // Integer in [0, n); consumes one uniform. n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Child stream keyed by (seed, label, index). Adding a new labelled
    // consumer never perturbs existing streams.
    Rng fork(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t seed() const { return seed_of_record_; }

private:
    std::uint64_t state_;
    std::uint64_t seed_of_record_ = state_;
};

// Fisher-Yates shuffle of an index vector, deterministic under the rng.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

// FNV-1a over arbitrary bytes; used for labelled seed derivation and for
// checksumming parameter/dataset payloads.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ULL);

}  // namespace sage
