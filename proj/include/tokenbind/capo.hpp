#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tokenbind/eig.hpp"
#include "tokenbind/matrix.hpp"
#include "tokenbind/prompt.hpp"

namespace tokenbind {

enum class CausalityMode { Causal, NonCausal };

inline const char* causality_name(CausalityMode m) {
    return m == CausalityMode::Causal ? "causal" : "noncausal";
}

struct CapoOptions {
    // The default update projects against each raw reference independently;
    // the strict variant projects onto the orthogonal complement of span(U),
    // which only differs when the references are not mutually orthogonal.
    bool strict_complement = false;
    // NonCausal token set: object (head-noun) tokens only by default, or all
    // NP tokens when set.
    bool include_attributes = false;
};

struct SchmidtResult {
    std::vector<double> w;
    bool degenerate = false; // residual norm collapsed below 1e-10 * ||w||
};

/// w' = w - sum_j <w,u_j>/<u_j,u_j> u_j, each reference used raw.
inline SchmidtResult schmidt_project_out(std::span<const double> w,
                                         const std::vector<std::vector<double>>& u_set) {
    SchmidtResult out;
    out.w.assign(w.begin(), w.end());
    const double w_norm = norm2(w);
    for (std::size_t j = 0; j < u_set.size(); ++j) {
        const auto& u = u_set[j];
        if (u.size() != w.size())
            fail(Errc::SizeMismatch, "schmidt_project_out: reference " + std::to_string(j) +
                                         " has mismatched dimension");
        const double uu = dot(u, u);
        if (std::sqrt(uu) < 1e-12)
            fail(Errc::ZeroReference,
                 "schmidt_project_out: reference " + std::to_string(j) + " has near-zero norm");
        const double coeff = dot(w, u) / uu;
        for (std::size_t k = 0; k < out.w.size(); ++k) out.w[k] -= coeff * u[k];
    }
    out.degenerate = norm2(out.w) < 1e-10 * w_norm;
    return out;
}

/// Projection of w onto the orthogonal complement of span(u_set), via a
/// modified Gram-Schmidt basis of the references. Exact even when the
/// references are mutually oblique.
inline SchmidtResult complement_project_out(std::span<const double> w,
                                            const std::vector<std::vector<double>>& u_set) {
    std::vector<std::vector<double>> basis;
    for (std::size_t j = 0; j < u_set.size(); ++j) {
        if (u_set[j].size() != w.size())
            fail(Errc::SizeMismatch, "complement_project_out: reference " + std::to_string(j) +
                                         " has mismatched dimension");
        if (norm2(u_set[j]) < 1e-12)
            fail(Errc::ZeroReference, "complement_project_out: reference " +
                                          std::to_string(j) + " has near-zero norm");
        std::vector<double> q = u_set[j];
        for (const auto& b : basis) {
            const double c = dot(q, b);
            for (std::size_t k = 0; k < q.size(); ++k) q[k] -= c * b[k];
        }
        const double qn = norm2(q);
        if (qn < 1e-12) continue; // linearly dependent reference adds nothing to the span
        for (double& v : q) v /= qn;
        basis.push_back(std::move(q));
    }

    SchmidtResult out;
    out.w.assign(w.begin(), w.end());
    const double w_norm = norm2(w);
    for (const auto& b : basis) {
        const double c = dot(out.w, b);
        for (std::size_t k = 0; k < out.w.size(); ++k) out.w[k] -= c * b[k];
    }
    out.degenerate = norm2(out.w) < 1e-10 * w_norm;
    return out;
}

/// Löwdin map X' = X (X^T X)^{-1/2}. Columns are token vectors; the output
/// columns are orthonormal and the map commutes with column permutations.
inline Matrix lowdin_orthogonalize(const Matrix& x) {
    if (x.cols() < 2)
        fail(Errc::DimensionMismatch, "lowdin_orthogonalize: needs at least 2 columns");
    const Matrix gram = matmul_tn(x, x);
    const Matrix r = inv_sqrt_psd(gram); // NearSingular for nearly parallel tokens
    return matmul(x, r);
}

struct CapoEvent {
    std::size_t np_index = 0;
    std::size_t token_index = 0;
    std::string what;
};

struct CapoResult {
    Matrix tokens;
    std::vector<CapoEvent> events;
};

namespace detail {

inline std::vector<double> row_vec(const Matrix& m, std::size_t r) {
    auto s = m.row(r);
    return std::vector<double>(s.begin(), s.end());
}

} // namespace detail

/// Applies the projection across NP boundaries. Causal: NPs in prompt order,
/// each token of NP_k projected against the already-transformed tokens of
/// NPs 1..k-1 (NP_1 is never modified). NonCausal: one joint Löwdin over the
/// selected token set of every NP. Tokens outside every NP pass through.
/// Degenerate residuals keep the original token and log an event.
inline CapoResult apply_capo(const Matrix& t, const PromptAnnotation& annotation,
                             CausalityMode mode, const CapoOptions& options = {}) {
    annotation.validate();
    if (annotation.token_count != t.rows())
        fail(Errc::SizeMismatch, "apply_capo: annotation token_count " +
                                     std::to_string(annotation.token_count) +
                                     " vs embedding rows " + std::to_string(t.rows()));
    CapoResult result{t, {}};
    if (annotation.nps.size() < 2) return result;

    if (mode == CausalityMode::Causal) {
        std::vector<std::vector<double>> references;
        for (std::size_t n = 0; n < annotation.nps.size(); ++n) {
            const auto& np = annotation.nps[n];
            if (n > 0) {
                for (std::size_t i = np.span_begin; i < np.span_end; ++i) {
                    SchmidtResult pr;
                    try {
                        pr = options.strict_complement
                                 ? complement_project_out(t.row(i), references)
                                 : schmidt_project_out(t.row(i), references);
                    } catch (const Error& e) {
                        if (e.code() == Errc::ZeroReference)
                            fail(Errc::ZeroReference,
                                 "apply_capo: NP " + std::to_string(n) + " vs earlier NPs: " +
                                     e.what());
                        throw;
                    }
                    if (pr.degenerate) {
                        result.events.push_back(
                            {n, i, "degenerate projection residual; token kept as-is"});
                    } else {
                        for (std::size_t k = 0; k < t.cols(); ++k)
                            result.tokens(i, k) = pr.w[k];
                    }
                }
            }
            for (std::size_t i = np.span_begin; i < np.span_end; ++i)
                references.push_back(detail::row_vec(result.tokens, i));
        }
        return result;
    }

    // NonCausal: joint Löwdin over the selected tokens of all NPs.
    std::vector<std::size_t> selected;
    for (const auto& np : annotation.nps) {
        if (options.include_attributes) {
            for (std::size_t i = np.span_begin; i < np.span_end; ++i) selected.push_back(i);
        } else {
            selected.push_back(np.object_index);
        }
    }
    Matrix x(t.cols(), selected.size());
    for (std::size_t c = 0; c < selected.size(); ++c)
        for (std::size_t r = 0; r < t.cols(); ++r) x(r, c) = t(selected[c], r);
    Matrix xp;
    try {
        xp = lowdin_orthogonalize(x);
    } catch (const Error& e) {
        if (e.code() == Errc::NearSingular)
            fail(Errc::NearSingular,
                 std::string("apply_capo: joint orthogonalization across NPs: ") + e.what());
        throw;
    }
    for (std::size_t c = 0; c < selected.size(); ++c)
        for (std::size_t r = 0; r < t.cols(); ++r) result.tokens(selected[c], r) = xp(r, c);
    return result;
}

} // namespace tokenbind
