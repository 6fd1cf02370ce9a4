#pragma once

#include <string>

#include "tokenbind/attention.hpp"
#include "tokenbind/capo.hpp"
#include "tokenbind/optim.hpp"
#include "tokenbind/report.hpp"

namespace tokenbind {

struct PipelineInputs {
    Matrix t; // L x d1 token embeddings
    Matrix h; // N x d2 latents
    ProjectionWeights w;
    PromptAnnotation annotation;
};

struct PipelineResult {
    Matrix tokens; // transformed token embeddings
    Matrix latents;
    BindingReport report;
};

namespace detail {

template <typename Fn> auto staged(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
    }
}

} // namespace detail

/// CAPO (if enabled) then mixing optimization (always run; steps = 0 leaves
/// parameters at initialization), with before/after geometry and attention
/// summaries assembled into the report. Errors carry the failing stage name.
inline PipelineResult run_pipeline(const PipelineInputs& in, const BindingConfig& config) {
    config.validate();
    detail::staged("validate", [&] {
        in.w.validate();
        in.annotation.validate();
        if (in.annotation.token_count != in.t.rows())
            fail(Errc::SizeMismatch, "annotation token_count vs embedding rows");
        if (in.t.cols() != in.w.w_k.rows())
            fail(Errc::DimensionMismatch, "token embedding width vs W_K rows");
        if (in.h.cols() != in.w.w_q.rows())
            fail(Errc::DimensionMismatch, "latent width vs W_Q rows");
        return 0;
    });

    const AttentionState before_state =
        detail::staged("attention", [&] { return cross_attention_maps(in.h, in.t, in.w); });

    CapoResult capo{in.t, {}};
    if (config.apply_capo)
        capo = detail::staged("capo", [&] {
            return apply_capo(in.t, in.annotation, config.causality, config.capo_options());
        });

    const OptimizeResult opt = detail::staged("optimize", [&] {
        return optimize_binding(capo.tokens, in.h, in.w, in.annotation, config);
    });

    const AttentionState after_state = detail::staged(
        "attention", [&] { return cross_attention_maps(opt.latents, opt.tokens, in.w); });

    PipelineResult out;
    out.tokens = opt.tokens;
    out.latents = opt.latents;
    out.report.config = config;
    out.report.geometry =
        detail::staged("report", [&] { return geometry_report(in.t, opt.tokens, in.annotation); });
    out.report.loss_trace = opt.trace;
    out.report.attention_before = compute_attention_summary(before_state, in.annotation);
    out.report.attention_after = compute_attention_summary(after_state, in.annotation);
    out.report.events = capo.events;
    return out;
}

} // namespace tokenbind
