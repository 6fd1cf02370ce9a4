#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "tokenbind/matrix.hpp"

namespace tokenbind {

/// Counter-based deterministic generator. The k-th raw draw is
/// mix64(seed + k * 0x9E3779B97F4A7C15), i.e. SplitMix64 evaluated at an
/// explicit counter, so identical seeds give identical streams on every
/// platform and a stream can be re-created from (seed, counter) alone.
/// Gaussians come from Box-Muller on consecutive uniforms (the paired
/// deviate is cached).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    /// Per-trial substream: trial t of a Monte Carlo run uses Rng(seed ^ t).
    Rng substream(std::uint64_t index) const { return Rng(seed_ ^ index); }

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.data()) v = scale * gaussian();
        return m;
    }

    std::vector<double> gaussian_vector(std::size_t n, double scale = 1.0) {
        std::vector<double> v(n);
        for (double& x : v) x = scale * gaussian();
        return v;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace tokenbind
