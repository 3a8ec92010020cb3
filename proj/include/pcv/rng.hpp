#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pcv {

// Deterministic splitmix64 stream. Identical output on every platform,
// unlike std::uniform_real_distribution. One run derives named sub-streams
// ("init", "shuffle", ...) so adding a consumer never shifts another
// consumer's sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng stream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64();

    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);

    // uniform integer in [0, n)
    std::size_t below(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

} // namespace pcv
