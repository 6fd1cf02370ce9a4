#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "tokenbind/matrix.hpp"

namespace tokenbind {

struct SymEigResult {
    std::vector<double> eigenvalues; // ascending
    Matrix eigenvectors;             // orthonormal columns, column i pairs with eigenvalues[i]
};

namespace detail {

inline double max_abs_entry(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

} // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Off-diagonal tolerance 1e-12 relative to the Frobenius norm, at most 100
/// sweeps. Sized for the <=64-dim matrices this library works with.
inline SymEigResult sym_eig(const Matrix& a) {
    constexpr double kSymTol = 1e-12;
    constexpr double kOffTol = 1e-12;
    constexpr int kMaxSweeps = 100;

    const std::size_t n = a.rows();
    if (n == 0 || a.cols() != n)
        fail(Errc::DimensionMismatch, "sym_eig: matrix must be square and non-empty");

    const double scale = std::max(detail::max_abs_entry(a), 1e-300);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > kSymTol * scale)
                fail(Errc::NotSymmetric, "sym_eig: asymmetry at (" + std::to_string(i) + "," +
                                             std::to_string(j) + ") exceeds tolerance");

    Matrix d = a;
    // Symmetrize exactly so rounding in the input cannot bias the sweeps.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (d(i, j) + d(j, i));
            d(i, j) = d(j, i) = v;
        }
    Matrix v = Matrix::identity(n);

    const double frob = std::max(frobenius_norm(d), 1e-300);
    int sweep = 0;
    while (detail::off_diagonal_norm(d) > kOffTol * frob) {
        if (++sweep > kMaxSweeps)
            fail(Errc::NoConvergence, "sym_eig: no convergence after " +
                                          std::to_string(kMaxSweeps) + " sweeps");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = d(p, q);
                if (std::abs(apq) <= kOffTol * frob * 1e-3) continue;
                const double theta = (d(q, q) - d(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double dkp = d(k, p), dkq = d(k, q);
                    d(k, p) = c * dkp - s * dkq;
                    d(k, q) = s * dkp + c * dkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double dpk = d(p, k), dqk = d(q, k);
                    d(p, k) = c * dpk - s * dqk;
                    d(q, k) = s * dpk + c * dqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return d(x, x) < d(y, y); });

    SymEigResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = d(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    }
    return out;
}

/// Inverse matrix square root of a symmetric positive definite matrix:
/// R = V diag(1/sqrt(lambda)) V^T, so R*R*g ~= I. Rejects matrices whose
/// smallest eigenvalue is at or below eps_pd (nearly parallel tokens).
inline Matrix inv_sqrt_psd(const Matrix& g, double eps_pd = 1e-10) {
    SymEigResult e = sym_eig(g);
    if (e.eigenvalues.front() <= eps_pd) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "inv_sqrt_psd: min eigenvalue %.3g <= %.3g",
                      e.eigenvalues.front(), eps_pd);
        fail(Errc::NearSingular, msg);
    }
    const std::size_t n = g.rows();
    Matrix scaled_vt(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 1.0 / std::sqrt(e.eigenvalues[i]);
        for (std::size_t j = 0; j < n; ++j) scaled_vt(i, j) = w * e.eigenvectors(j, i);
    }
    Matrix r = matmul(e.eigenvectors, scaled_vt);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (r(i, j) + r(j, i));
            r(i, j) = r(j, i) = v;
        }
    return r;
}

} // namespace tokenbind
