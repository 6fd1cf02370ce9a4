#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokenbind/attention.hpp"
#include "tokenbind/matrix.hpp"
#include "tokenbind/prompt.hpp"
#include "tokenbind/rng.hpp"

namespace tokenbind {

/// Synthetic stand-in for encoder outputs: token rows are mu + N(0, I) with a
/// shared mean of norm `mean_norm`, so token norms concentrate near
/// sqrt(d_text) while pairwise cosine similarities stay well under 0.5 — the
/// regime the propositions assume.
struct SynthParams {
    std::size_t n_nps = 2;
    std::size_t np_size = 3;   // attributes + head noun
    std::size_t n_latents = 16;
    std::size_t d_text = 16;
    std::size_t d_latent = 16;
    std::size_t d_inner = 8;
    std::size_t n_pads = 2;
    double mean_norm = 2.6;
};

struct SynthInstance {
    std::vector<std::string> words;
    PromptAnnotation annotation;
    Matrix t; // L x d_text
    Matrix h; // N x d_latent
    ProjectionWeights w;
};

inline SynthInstance gen_instance(const SynthParams& params, std::uint64_t seed) {
    if (params.n_nps == 0 || params.np_size == 0)
        fail(Errc::DimensionMismatch, "gen_instance: need at least one NP with one token");
    const Lexicon lex = Lexicon::basic();
    std::vector<std::string> adjectives(lex.adjectives.begin(), lex.adjectives.end());
    std::vector<std::string> nouns(lex.nouns.begin(), lex.nouns.end());

    SynthInstance inst;
    std::size_t word_cursor = 0;
    for (std::size_t n = 0; n < params.n_nps; ++n) {
        if (n > 0) inst.words.push_back("and");
        inst.words.push_back("a");
        NounPhrase np;
        np.span_begin = inst.words.size();
        for (std::size_t a = 0; a + 1 < params.np_size; ++a) {
            np.attribute_indices.push_back(inst.words.size());
            inst.words.push_back(adjectives[word_cursor % adjectives.size()]);
            ++word_cursor;
        }
        np.object_index = inst.words.size();
        inst.words.push_back(nouns[n % nouns.size()]);
        np.span_end = inst.words.size();
        inst.annotation.nps.push_back(std::move(np));
    }
    inst.annotation.eot_index = inst.words.size();
    inst.words.push_back("<eot>");
    for (std::size_t p = 0; p < params.n_pads; ++p) {
        inst.annotation.pad_indices.push_back(inst.words.size());
        inst.words.push_back("<pad>");
    }
    inst.annotation.token_count = inst.words.size();
    inst.annotation.validate();

    Rng rng(seed);
    std::vector<double> mu = rng.gaussian_vector(params.d_text);
    const double mu_norm = norm2(mu);
    if (mu_norm > 0.0)
        for (double& v : mu) v *= params.mean_norm / mu_norm;

    const std::size_t L = inst.words.size();
    inst.t = Matrix(L, params.d_text);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t c = 0; c < params.d_text; ++c)
            inst.t(i, c) = mu[c] + rng.gaussian();

    inst.h = rng.gaussian_matrix(params.n_latents, params.d_latent);

    const double wq_scale = 1.0 / std::sqrt(static_cast<double>(params.d_latent));
    const double wk_scale = 1.0 / std::sqrt(static_cast<double>(params.d_text));
    inst.w.d = params.d_inner;
    inst.w.w_q = rng.gaussian_matrix(params.d_latent, params.d_inner, wq_scale);
    inst.w.w_k = rng.gaussian_matrix(params.d_text, params.d_inner, wk_scale);
    inst.w.w_v = rng.gaussian_matrix(params.d_text, params.d_inner, wk_scale);
    return inst;
}

/// The bundled two-NP instance the optimization and pipeline acceptance
/// criteria run on: N=16 latent positions, two 3-token NPs, d=8.
inline SynthInstance bundled_instance(std::uint64_t seed = 20240901) {
    return gen_instance(SynthParams{}, seed);
}

} // namespace tokenbind
