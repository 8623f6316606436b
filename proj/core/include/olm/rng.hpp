#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace olm {

// Seeded RNG wrapper. All derived draws (bounded ints, shuffles, Poisson)
// are implemented here rather than with std <random> distributions so that
// streams are identical across standard libraries, not just across runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, n) via 128-bit multiply-shift.
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Knuth product-of-uniforms sampler; adequate for the moderate rates
    // used in the synthetic worlds (cost grows linearly with lambda).
    std::int64_t poisson(double lambda);

private:
    std::mt19937_64 engine_;
};

} // namespace olm
