#include "pcv/rng.hpp"

namespace pcv {

namespace {

std::uint64_t splitmix_next(std::uint64_t& s) {
    s += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace

Rng Rng::stream(std::uint64_t seed, std::string_view name) {
    // Mix the stream name into the seed; two scrambling rounds so that
    // nearby seeds do not yield correlated streams.
    std::uint64_t s = seed ^ fnv1a(name);
    splitmix_next(s);
    splitmix_next(s);
    return Rng(s);
}

std::uint64_t Rng::next_u64() {
    return splitmix_next(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::below(std::size_t n) {
    // Rejection-free modulo is fine here: n is always tiny relative to 2^64,
    // the bias is < n / 2^64.
    return static_cast<std::size_t>(next_u64() % n);
}

} // namespace pcv
