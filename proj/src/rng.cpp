#include "sage/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sage {

double Rng::normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // keep log finite without extra draws
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng Rng::fork(std::string_view label, std::uint64_t index) const {
    std::uint64_t h = fnv1a64(&seed_of_record_, sizeof(seed_of_record_));
    h = fnv1a64(label.data(), label.size(), h);
    h = fnv1a64(&index, sizeof(index), h);
    // scramble once so nearby (label, index) pairs land far apart
    Rng child(h);
    child.state_ = child.next_u64();
    child.seed_of_record_ = child.state_;
    return child;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace sage
