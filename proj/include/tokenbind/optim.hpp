#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tokenbind/atm.hpp"
#include "tokenbind/attention.hpp"
#include "tokenbind/capo.hpp"
#include "tokenbind/matrix.hpp"
#include "tokenbind/prompt.hpp"

namespace tokenbind {

struct BindingConfig {
    double lambda = 0.01;      // loss balance; non-causal runs typically use 0.05
    double eta = 0.05;         // gradient-descent step size
    std::size_t steps = 200;
    double clamp_bound = 2.0;  // mixing-entry clamp, applied after every step
    CausalityMode causality = CausalityMode::Causal;
    bool apply_capo = true;
    bool optimize_latents = true;
    bool optimize_aux_tokens = true; // defaults on for causal, off for non-causal
    bool backtracking = false;       // halve eta whenever a step would increase the loss
    bool strict_complement = false;
    bool include_attributes = false;
    std::uint64_t seed = 0;

    static BindingConfig defaults(CausalityMode mode) {
        BindingConfig c;
        c.causality = mode;
        c.optimize_aux_tokens = (mode == CausalityMode::Causal);
        return c;
    }

    void validate() const {
        if (lambda < 0.0) fail(Errc::NonPositiveScale, "config: lambda must be >= 0");
        if (eta <= 0.0) fail(Errc::NonPositiveScale, "config: eta must be > 0");
        if (clamp_bound <= 0.0)
            fail(Errc::NonPositiveScale, "config: clamp_bound must be > 0");
    }

    CapoOptions capo_options() const { return {strict_complement, include_attributes}; }
};

struct LossBreakdown {
    double ent = 0.0;
    double bhat = 0.0;
    double total = 0.0;
};

struct GradientBundle {
    std::vector<Matrix> d_mixing;      // per-NP, shapes match the MixingSet
    std::optional<Matrix> d_latents;   // N x d2, present iff optimize_latents
    Matrix d_tokens;                   // L x d1, gradient against the mixed token matrix
};

/// ent = sum over object tokens of H(A_k); bhat = sum over inter-NP
/// object pairs of BC(A_m, A_n); total = ent + lambda*bhat.
inline LossBreakdown total_loss(const AttentionState& state, const PromptAnnotation& annotation,
                                double lambda) {
    annotation.validate();
    if (annotation.nps.empty())
        fail(Errc::EmptyObjectSet, "total_loss: annotation has no NPs, object set K is empty");
    LossBreakdown out;
    for (const auto& np : annotation.nps)
        out.ent += shannon_entropy(token_distribution(state, np.object_index));
    for (auto [m, n] : inter_np_pairs(annotation))
        out.bhat += bhattacharyya_coeff(token_distribution(state, m),
                                        token_distribution(state, n));
    out.total = out.ent + lambda * out.bhat;
    return out;
}

namespace detail {

// Forward pass with the intermediates the backward pass needs. Queries carry
// the 1/sqrt(d) scaling so logits = C K^T.
struct ForwardPass {
    Matrix t_mixed; // L x d1
    Matrix c;       // N x d, scaled queries
    Matrix k;       // L x d
    Matrix p;       // N x L
    Matrix a;       // N x L
    std::vector<double> col_sums; // per text token, sum of its p column
    LossBreakdown loss;
};

inline ForwardPass forward(const Matrix& t, const Matrix& h, const ProjectionWeights& w,
                           const PromptAnnotation& annotation, const MixingSet& m,
                           double lambda) {
    ForwardPass f;
    f.t_mixed = apply_mixing(t, annotation, m);
    f.c = matmul(h, w.w_q);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.d));
    for (double& v : f.c.data()) v *= inv_sqrt_d;
    f.k = matmul(f.t_mixed, w.w_k);
    f.p = softmax_rows(matmul_nt(f.c, f.k));

    const std::size_t n_pos = f.p.rows(), n_tok = f.p.cols();
    f.a = f.p;
    f.col_sums.assign(n_tok, 0.0);
    for (std::size_t j = 0; j < n_tok; ++j) {
        for (std::size_t i = 0; i < n_pos; ++i) f.col_sums[j] += f.p(i, j);
        if (f.col_sums[j] <= 0.0)
            fail(Errc::DegenerateColumn, "forward: attention column " + std::to_string(j) +
                                             " sums to 0");
        for (std::size_t i = 0; i < n_pos; ++i) f.a(i, j) /= f.col_sums[j];
    }

    AttentionState st{f.p, f.a};
    f.loss = total_loss(st, annotation, lambda);
    return f;
}

} // namespace detail

/// Exact reverse-mode gradients of total_loss through the chain
/// T -> M V -> K -> logits -> row softmax -> column normalize -> losses,
/// with an eps = 1e-12 clamp inside the log/sqrt derivatives only.
inline GradientBundle grad_total_loss(const Matrix& t, const Matrix& h,
                                      const ProjectionWeights& w,
                                      const PromptAnnotation& annotation, const MixingSet& m,
                                      const BindingConfig& config) {
    config.validate();
    w.validate();
    const detail::ForwardPass f = detail::forward(t, h, w, annotation, m, config.lambda);
    const std::size_t n_pos = f.p.rows(), n_tok = f.p.cols();
    constexpr double kEps = 1e-12;

    // d(loss)/dA
    Matrix d_a(n_pos, n_tok);
    for (const auto& np : annotation.nps) {
        const std::size_t k = np.object_index;
        for (std::size_t i = 0; i < n_pos; ++i)
            d_a(i, k) += -(std::log(std::max(f.a(i, k), kEps)) + 1.0);
    }
    for (auto [tm, tn] : inter_np_pairs(annotation)) {
        for (std::size_t i = 0; i < n_pos; ++i) {
            const double am = f.a(i, tm), an = f.a(i, tn);
            d_a(i, tm) += config.lambda * 0.5 * std::sqrt(an / std::max(am, kEps));
            d_a(i, tn) += config.lambda * 0.5 * std::sqrt(am / std::max(an, kEps));
        }
    }

    // Column-normalization backward: dP = (dA - sum_b dA_b A_b) / S per column.
    Matrix d_p(n_pos, n_tok);
    for (std::size_t j = 0; j < n_tok; ++j) {
        double inner = 0.0;
        for (std::size_t i = 0; i < n_pos; ++i) inner += d_a(i, j) * f.a(i, j);
        for (std::size_t i = 0; i < n_pos; ++i)
            d_p(i, j) = (d_a(i, j) - inner) / f.col_sums[j];
    }

    // Row-softmax backward: dlogits = P o (dP - sum_row dP o P).
    Matrix d_logits(n_pos, n_tok);
    for (std::size_t i = 0; i < n_pos; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < n_tok; ++j) inner += d_p(i, j) * f.p(i, j);
        for (std::size_t j = 0; j < n_tok; ++j)
            d_logits(i, j) = f.p(i, j) * (d_p(i, j) - inner);
    }

    // logits = C K^T
    const Matrix d_k = matmul_tn(d_logits, f.c);   // L x d
    const Matrix d_t_mixed = matmul_nt(d_k, w.w_k); // L x d1

    GradientBundle g;
    g.d_tokens = d_t_mixed;
    for (const auto& np : annotation.nps) {
        const std::size_t n = np.size();
        Matrix dm(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < t.cols(); ++c)
                    s += d_t_mixed(np.span_begin + i, c) * t(np.span_begin + j, c);
                dm(i, j) = s;
            }
        g.d_mixing.push_back(std::move(dm));
    }

    if (config.optimize_latents) {
        const Matrix d_c = matmul(d_logits, f.k); // N x d
        Matrix d_h = matmul_nt(d_c, w.w_q);       // N x d2
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.d));
        for (double& v : d_h.data()) v *= inv_sqrt_d;
        g.d_latents = std::move(d_h);
    }

    auto ensure_finite = [](const Matrix& mat, const char* who) {
        for (double v : mat.data())
            if (!std::isfinite(v))
                fail(Errc::NotFinite, std::string("grad_total_loss: non-finite ") + who);
    };
    for (const auto& dm : g.d_mixing) ensure_finite(dm, "mixing gradient");
    if (g.d_latents) ensure_finite(*g.d_latents, "latent gradient");
    ensure_finite(g.d_tokens, "token gradient");
    return g;
}

struct OptimizeResult {
    Matrix tokens;   // apply_mixing(final aux-updated T, annotation, final mixing)
    MixingSet mixing;
    Matrix latents;  // final H
    std::vector<LossBreakdown> trace; // steps + 1 entries
};

namespace detail {

inline std::vector<std::size_t> aux_indices(const PromptAnnotation& annotation) {
    std::vector<std::size_t> idx;
    if (annotation.eot_index) idx.push_back(*annotation.eot_index);
    for (std::size_t p : annotation.pad_indices) idx.push_back(p);
    return idx;
}

} // namespace detail

/// theta' = theta - eta * grad, over (mixing matrices, latents, EOT/PAD rows)
/// as enabled, clamping mixing entries after every step. The trace holds the
/// initial loss plus one entry per step. With backtracking on, a step that
/// would increase the loss halves eta (persistently) and retries from the
/// same gradients; eta underflow keeps the current parameters for that step.
inline OptimizeResult optimize_binding(const Matrix& t, const Matrix& h,
                                       const ProjectionWeights& w,
                                       const PromptAnnotation& annotation,
                                       const BindingConfig& config) {
    config.validate();
    w.validate();
    annotation.validate();

    Matrix t_cur = t;
    Matrix h_cur = h;
    MixingSet m = init_mixing(annotation, config.clamp_bound);
    const std::vector<std::size_t> aux = detail::aux_indices(annotation);
    double eta = config.eta;

    auto check_finite = [](const LossBreakdown& l, std::size_t step) {
        if (!std::isfinite(l.total))
            fail(Errc::NonFiniteLoss, "optimize_binding: non-finite loss at step " +
                                          std::to_string(step));
    };

    OptimizeResult out;
    out.trace.reserve(config.steps + 1);
    LossBreakdown current =
        detail::forward(t_cur, h_cur, w, annotation, m, config.lambda).loss;
    check_finite(current, 0);
    out.trace.push_back(current);

    for (std::size_t step = 1; step <= config.steps; ++step) {
        const GradientBundle g = grad_total_loss(t_cur, h_cur, w, annotation, m, config);

        auto candidate = [&](double step_size) {
            MixingSet mc = m;
            for (std::size_t n = 0; n < mc.per_np.size(); ++n)
                for (std::size_t i = 0; i < mc.per_np[n].data().size(); ++i)
                    mc.per_np[n].data()[i] -= step_size * g.d_mixing[n].data()[i];
            mc = clamp_mixing(std::move(mc));
            Matrix hc = h_cur;
            if (config.optimize_latents)
                for (std::size_t i = 0; i < hc.data().size(); ++i)
                    hc.data()[i] -= step_size * g.d_latents->data()[i];
            Matrix tc = t_cur;
            if (config.optimize_aux_tokens)
                for (std::size_t r : aux)
                    for (std::size_t c = 0; c < tc.cols(); ++c)
                        tc(r, c) -= step_size * g.d_tokens(r, c);
            return std::tuple<MixingSet, Matrix, Matrix>{std::move(mc), std::move(hc),
                                                         std::move(tc)};
        };

        auto [mc, hc, tc] = candidate(eta);
        LossBreakdown next = detail::forward(tc, hc, w, annotation, mc, config.lambda).loss;
        if (config.backtracking) {
            while ((!std::isfinite(next.total) || next.total > current.total) && eta > 1e-15) {
                eta *= 0.5;
                std::tie(mc, hc, tc) = candidate(eta);
                next = detail::forward(tc, hc, w, annotation, mc, config.lambda).loss;
            }
            if (next.total > current.total) { // eta underflow: hold position
                out.trace.push_back(current);
                continue;
            }
        }
        check_finite(next, step);
        m = std::move(mc);
        h_cur = std::move(hc);
        t_cur = std::move(tc);
        current = next;
        out.trace.push_back(current);
    }

    out.tokens = apply_mixing(t_cur, annotation, m);
    out.mixing = std::move(m);
    out.latents = std::move(h_cur);
    return out;
}

} // namespace tokenbind
