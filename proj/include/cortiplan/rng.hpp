#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cortiplan {

// Deterministic RNG used throughout. mt19937_64 is fully specified by the
// standard; the floating-point draws are hand-rolled because the standard
// distributions are implementation-defined and would break byte-identical
// reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is negligible for the n used here (dataset sizes, grid
        // dims), and the simple form keeps the draw sequence obvious
        return engine_() % n;
    }

    // standard normal via Box-Muller (consumes two draws)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cortiplan
