#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tokenbind/matrix.hpp"

namespace tokenbind {

/// Mean squared error between two equal-length vectors.
inline double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail(Errc::SizeMismatch, "mse: vectors of length " + std::to_string(a.size()) +
                                     " and " + std::to_string(b.size()));
    if (a.empty()) fail(Errc::SizeMismatch, "mse: empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// Angle between two vectors in radians, in [0, pi]. The cosine is clamped to
/// [-1, 1] before acos so rounding cannot push it out of domain.
inline double angle_between(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail(Errc::SizeMismatch, "angle_between: vectors of length " +
                                     std::to_string(a.size()) + " and " +
                                     std::to_string(b.size()));
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0)
        fail(Errc::ZeroVector, "angle_between: zero-norm input");
    double c = dot(a, b) / (na * nb);
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

/// Median of a list of values (average of the central pair for even length).
inline double median(std::vector<double> v) {
    if (v.empty()) fail(Errc::SizeMismatch, "median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace tokenbind
