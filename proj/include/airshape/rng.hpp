#ifndef AIRSHAPE_RNG_HPP
#define AIRSHAPE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace airshape {

// Deterministic RNG used everywhere. Distributions are hand-rolled on top of
// splitmix64 so results are bit-identical across platforms and standard
// library versions (std::shuffle and std::*_distribution are not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call (the twin is discarded to keep the
    // consumption pattern trivially predictable).
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Derives an independent stream from a root seed and a purpose label, so all
// pipeline randomness flows from one seed through named sub-seeds.
inline uint64_t derive_seed(uint64_t root, const std::string& label) {
    uint64_t h = 0xcbf29ce484222325ull ^ root;
    for (char c : label) {
        h ^= uint64_t(uint8_t(c));
        h *= 0x100000001b3ull;
    }
    // one splitmix round to decorrelate from the FNV structure
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline uint64_t derive_seed(uint64_t root, const std::string& label, uint64_t index) {
    return derive_seed(root ^ (0x9e3779b97f4a7c15ull * (index + 1)), label);
}

} // namespace airshape

#endif
