#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace omd {

// Deterministic draws on top of mt19937_64. The standard distributions are
// implementation-defined, so uniform/normal/bounded-int are spelled out here
// to keep outputs bit-identical across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; one value per call, cached pair
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n), rejection sampled
    std::uint64_t bounded(std::uint64_t n) {
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates over indices [0, n)
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// mixes a base seed with a stream index (e.g. epoch) into a fresh seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace omd
