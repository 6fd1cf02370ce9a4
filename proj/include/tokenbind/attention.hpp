#pragma once

#include <cmath>
#include <span>
#include <string>

#include "tokenbind/matrix.hpp"

namespace tokenbind {

struct ProjectionWeights {
    Matrix w_q; // d2 x d
    Matrix w_k; // d1 x d
    Matrix w_v; // d1 x d
    std::size_t d = 0;

    void validate() const {
        if (w_q.cols() != d || w_k.cols() != d || w_v.cols() != d)
            fail(Errc::DimensionMismatch,
                 "ProjectionWeights: column counts must all equal d=" + std::to_string(d));
        if (d == 0) fail(Errc::DimensionMismatch, "ProjectionWeights: d must be positive");
    }
};

/// p: N x L, each row a distribution over the L text tokens.
/// a: N x L, column i is A_i — column i of p rescaled to sum 1 over positions.
struct AttentionState {
    Matrix p;
    Matrix a;
};

namespace detail {

inline void check_distribution(std::span<const double> p, const char* who) {
    double s = 0.0;
    for (double v : p) {
        if (v < 0.0) fail(Errc::NotDistribution, std::string(who) + ": negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-10)
        fail(Errc::NotDistribution,
             std::string(who) + ": sums to " + std::to_string(s) + ", not 1");
}

} // namespace detail

/// P = softmax_rows(H W_Q (T W_K)^T / sqrt(d)), plus the per-token
/// sum-1 column normalization A_i.
inline AttentionState cross_attention_maps(const Matrix& h, const Matrix& t,
                                           const ProjectionWeights& w) {
    w.validate();
    if (h.cols() != w.w_q.rows())
        fail(Errc::DimensionMismatch, "cross_attention_maps: H cols " +
                                          std::to_string(h.cols()) + " vs W_Q rows " +
                                          std::to_string(w.w_q.rows()));
    if (t.cols() != w.w_k.rows())
        fail(Errc::DimensionMismatch, "cross_attention_maps: T cols " +
                                          std::to_string(t.cols()) + " vs W_K rows " +
                                          std::to_string(w.w_k.rows()));
    const Matrix q = matmul(h, w.w_q);
    const Matrix k = matmul(t, w.w_k);
    Matrix logits = matmul_nt(q, k);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.d));
    for (double& v : logits.data()) v *= inv_sqrt_d;

    AttentionState st;
    st.p = softmax_rows(logits);
    st.a = st.p;
    for (std::size_t j = 0; j < st.a.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < st.a.rows(); ++i) s += st.a(i, j);
        if (s <= 0.0)
            fail(Errc::DegenerateColumn,
                 "cross_attention_maps: column " + std::to_string(j) + " sums to 0");
        for (std::size_t i = 0; i < st.a.rows(); ++i) st.a(i, j) /= s;
    }
    return st;
}

/// Column i of `a` as a standalone distribution over latent positions.
inline std::vector<double> token_distribution(const AttentionState& st, std::size_t token) {
    if (token >= st.a.cols())
        fail(Errc::IndexOutOfRange,
             "token_distribution: token " + std::to_string(token) + " out of range");
    std::vector<double> out(st.a.rows());
    for (std::size_t i = 0; i < st.a.rows(); ++i) out[i] = st.a(i, token);
    return out;
}

/// D_KL(a_i || a_j) = sum a_i log(a_i / a_j), natural log, 0 log 0 = 0.
inline double kl_divergence(std::span<const double> a_i, std::span<const double> a_j) {
    if (a_i.size() != a_j.size())
        fail(Errc::SizeMismatch, "kl_divergence: length mismatch");
    detail::check_distribution(a_i, "kl_divergence (first)");
    detail::check_distribution(a_j, "kl_divergence (second)");
    double s = 0.0;
    for (std::size_t b = 0; b < a_i.size(); ++b) {
        if (a_i[b] == 0.0) continue;
        if (a_j[b] == 0.0)
            fail(Errc::AbsoluteContinuityViolation,
                 "kl_divergence: second distribution vanishes where first does not (index " +
                     std::to_string(b) + ")");
        s += a_i[b] * std::log(a_i[b] / a_j[b]);
    }
    return s;
}

/// Bhattacharyya coefficient sum sqrt(p q), in [0, 1]; 1 iff equal.
inline double bhattacharyya_coeff(std::span<const double> a_m, std::span<const double> a_n) {
    if (a_m.size() != a_n.size())
        fail(Errc::SizeMismatch, "bhattacharyya_coeff: length mismatch");
    detail::check_distribution(a_m, "bhattacharyya_coeff (first)");
    detail::check_distribution(a_n, "bhattacharyya_coeff (second)");
    double s = 0.0;
    for (std::size_t b = 0; b < a_m.size(); ++b) s += std::sqrt(a_m[b] * a_n[b]);
    return s;
}

/// Shannon entropy -sum p log p (natural log, 0 log 0 = 0), in [0, log N].
inline double shannon_entropy(std::span<const double> a_k) {
    detail::check_distribution(a_k, "shannon_entropy");
    double s = 0.0;
    for (double p : a_k)
        if (p > 0.0) s -= p * std::log(p);
    return s;
}

} // namespace tokenbind
