#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tokenbind/matrix.hpp"
#include "tokenbind/prompt.hpp"

namespace tokenbind {

/// One learnable square mixing matrix per NP, entries kept inside
/// [-clamp_bound, clamp_bound] by clamp_mixing.
struct MixingSet {
    std::vector<Matrix> per_np; // per_np[n] is n_tokens x n_tokens for NP n
    double clamp_bound = 2.0;

    bool operator==(const MixingSet&) const = default;
};

/// Identity initialization: step 0 of the optimizer reproduces the unmodified
/// prompt bit-exactly.
inline MixingSet init_mixing(const PromptAnnotation& annotation, double clamp_bound = 2.0) {
    annotation.validate();
    if (clamp_bound <= 0.0)
        fail(Errc::NonPositiveScale, "init_mixing: clamp_bound must be positive");
    MixingSet m;
    m.clamp_bound = clamp_bound;
    for (const auto& np : annotation.nps) m.per_np.push_back(Matrix::identity(np.size()));
    return m;
}

/// Within each NP the stacked token rows V are replaced by M_V V;
/// everything outside the NP spans passes through unchanged.
inline Matrix apply_mixing(const Matrix& t, const PromptAnnotation& annotation,
                           const MixingSet& m) {
    annotation.validate();
    if (annotation.token_count != t.rows())
        fail(Errc::SizeMismatch, "apply_mixing: annotation token_count vs embedding rows");
    if (m.per_np.size() != annotation.nps.size())
        fail(Errc::SizeMismatch, "apply_mixing: " + std::to_string(m.per_np.size()) +
                                     " mixing matrices for " +
                                     std::to_string(annotation.nps.size()) + " NPs");
    Matrix out = t;
    for (std::size_t n = 0; n < annotation.nps.size(); ++n) {
        const auto& np = annotation.nps[n];
        const Matrix& mv = m.per_np[n];
        if (mv.rows() != np.size() || mv.cols() != np.size())
            fail(Errc::SizeMismatch, "apply_mixing: NP " + std::to_string(n) + " has " +
                                         std::to_string(np.size()) + " tokens but a " +
                                         std::to_string(mv.rows()) + "x" +
                                         std::to_string(mv.cols()) + " mixing matrix");
        for (std::size_t i = 0; i < np.size(); ++i)
            for (std::size_t c = 0; c < t.cols(); ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < np.size(); ++j)
                    s += mv(i, j) * t(np.span_begin + j, c);
                out(np.span_begin + i, c) = s;
            }
    }
    return out;
}

/// ToMe-style merge coefficients: [alpha, beta, beta, ...] with the object
/// token in position 1 by convention, so u_mer = alpha*u_1 + beta*sum u_i.
inline Matrix tome_merge_matrix(std::size_t n, double alpha = 1.1, double beta = 1.2) {
    if (n == 0) fail(Errc::DimensionMismatch, "tome_merge_matrix: n must be >= 1");
    Matrix row(1, n);
    row(0, 0) = alpha;
    for (std::size_t i = 1; i < n; ++i) row(0, i) = beta;
    return row;
}

/// ToMe's merge rendered as a fixed ATM instance: every row of each NP's
/// matrix carries the merge coefficients (alpha on the object column, beta on
/// the attribute columns), so apply_mixing replaces each NP token with the
/// merged token u_mer.
inline MixingSet tome_mixing_set(const PromptAnnotation& annotation, double alpha = 1.1,
                                 double beta = 1.2, double clamp_bound = 2.0) {
    annotation.validate();
    MixingSet m;
    m.clamp_bound = clamp_bound;
    for (const auto& np : annotation.nps) {
        const std::size_t n = np.size();
        Matrix mv(n, n);
        const std::size_t obj = np.object_index - np.span_begin;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) mv(i, j) = (j == obj) ? alpha : beta;
        m.per_np.push_back(std::move(mv));
    }
    return m;
}

/// Elementwise clamp of every mixing entry into [-c, c]; idempotent.
inline MixingSet clamp_mixing(MixingSet m) {
    if (m.clamp_bound <= 0.0)
        fail(Errc::NonPositiveScale, "clamp_mixing: clamp_bound must be positive");
    for (auto& mv : m.per_np)
        for (double& v : mv.data()) v = std::clamp(v, -m.clamp_bound, m.clamp_bound);
    return m;
}

} // namespace tokenbind
