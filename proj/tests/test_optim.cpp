#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tokenbind/optim.hpp"
#include "tokenbind/rng.hpp"
#include "tokenbind/synth.hpp"

using namespace tokenbind;

namespace {

PromptAnnotation two_objects() {
    PromptAnnotation ann;
    ann.token_count = 2;
    ann.nps.push_back({0, 1, 0, {}});
    ann.nps.push_back({1, 2, 1, {}});
    return ann;
}

AttentionState state_from_a(const Matrix& a) { return {a, a}; }

double fd_loss(const SynthInstance& inst, const MixingSet& m, double lambda) {
    return detail::forward(inst.t, inst.h, inst.w, inst.annotation, m, lambda).loss.total;
}

} // namespace

TEST_CASE("total_loss: one-hot columns give exactly zero", "[optim]") {
    Matrix a(4, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 1.0;
    const LossBreakdown l = total_loss(state_from_a(a), two_objects(), 0.7);
    REQUIRE(l.ent == 0.0);
    REQUIRE(l.bhat == 0.0);
    REQUIRE(l.total == 0.0);
}

TEST_CASE("total_loss: uniform columns give 2 ln 4 + lambda", "[optim]") {
    Matrix a(4, 2);
    for (double& v : a.data()) v = 0.25;
    const LossBreakdown l = total_loss(state_from_a(a), two_objects(), 1.0);
    REQUIRE(l.ent == Catch::Approx(2.0 * std::log(4.0)).margin(1e-12));
    REQUIRE(l.bhat == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(l.total == Catch::Approx(2.0 * std::log(4.0) + 1.0).margin(1e-12));
}

TEST_CASE("total_loss composition and lambda handling", "[optim]") {
    Rng rng(61);
    Matrix a(5, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            a(i, j) = rng.uniform(0.1, 1.0);
            s += a(i, j);
        }
        for (std::size_t i = 0; i < 5; ++i) a(i, j) /= s;
    }
    const PromptAnnotation ann = two_objects();
    const LossBreakdown l = total_loss(state_from_a(a), ann, 0.3);
    REQUIRE(l.total == l.ent + 0.3 * l.bhat); // definitionally exact

    const LossBreakdown l0 = total_loss(state_from_a(a), ann, 0.0);
    REQUIRE(l0.total == l0.ent);
    REQUIRE(l0.bhat == l.bhat); // lambda only reweights, terms are unchanged

    PromptAnnotation empty;
    empty.token_count = 2;
    try {
        total_loss(state_from_a(a), empty, 0.3);
        FAIL("expected EmptyObjectSet");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::EmptyObjectSet);
    }
}

TEST_CASE("grad_total_loss matches central finite differences", "[optim]") {
    SynthParams params;
    params.n_nps = 2;
    params.np_size = 2;
    params.n_latents = 6;
    params.d_text = 6;
    params.d_latent = 6;
    params.d_inner = 4;
    params.n_pads = 1;
    const SynthInstance inst = gen_instance(params, 77);

    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.lambda = 0.02;

    Rng rng(62);
    MixingSet m = init_mixing(inst.annotation);
    for (auto& mv : m.per_np)
        for (double& v : mv.data()) v += 0.1 * rng.gaussian();

    const GradientBundle g =
        grad_total_loss(inst.t, inst.h, inst.w, inst.annotation, m, config);
    const double h_fd = 1e-5;
    auto check = [&](double analytic, double fd) {
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
        REQUIRE(std::abs(analytic - fd) / denom < 1e-6);
    };

    SECTION("every mixing entry") {
        for (std::size_t n = 0; n < m.per_np.size(); ++n) {
            for (std::size_t i = 0; i < m.per_np[n].data().size(); ++i) {
                MixingSet plus = m, minus = m;
                plus.per_np[n].data()[i] += h_fd;
                minus.per_np[n].data()[i] -= h_fd;
                const double fd = (fd_loss(inst, plus, config.lambda) -
                                   fd_loss(inst, minus, config.lambda)) /
                                  (2.0 * h_fd);
                check(g.d_mixing[n].data()[i], fd);
            }
        }
    }

    SECTION("sampled latent coordinates") {
        REQUIRE(g.d_latents.has_value());
        for (std::size_t i = 0; i < inst.h.data().size(); i += 7) {
            SynthInstance plus = inst, minus = inst;
            plus.h.data()[i] += h_fd;
            minus.h.data()[i] -= h_fd;
            const double fd =
                (fd_loss(plus, m, config.lambda) - fd_loss(minus, m, config.lambda)) /
                (2.0 * h_fd);
            check(g.d_latents->data()[i], fd);
        }
    }

    SECTION("EOT and PAD token coordinates") {
        std::vector<std::size_t> aux = {*inst.annotation.eot_index};
        aux.insert(aux.end(), inst.annotation.pad_indices.begin(),
                   inst.annotation.pad_indices.end());
        for (std::size_t r : aux) {
            for (std::size_t c = 0; c < inst.t.cols(); ++c) {
                SynthInstance plus = inst, minus = inst;
                plus.t(r, c) += h_fd;
                minus.t(r, c) -= h_fd;
                const double fd =
                    (fd_loss(plus, m, config.lambda) - fd_loss(minus, m, config.lambda)) /
                    (2.0 * h_fd);
                check(g.d_tokens(r, c), fd);
            }
        }
    }
}

TEST_CASE("optimize_binding with zero steps is the identity", "[optim]") {
    const SynthInstance inst = bundled_instance();
    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.steps = 0;

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    REQUIRE(res.trace.size() == 1);
    REQUIRE(res.tokens.data() == inst.t.data());
    REQUIRE(res.latents.data() == inst.h.data());
    REQUIRE(res.mixing == init_mixing(inst.annotation, config.clamp_bound));
}

TEST_CASE("optimize_binding single step equals the manual update", "[optim]") {
    const SynthInstance inst = bundled_instance();
    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.steps = 1;
    config.clamp_bound = 1e9; // keep the clamp inert for this check

    const MixingSet m0 = init_mixing(inst.annotation, config.clamp_bound);
    const GradientBundle g =
        grad_total_loss(inst.t, inst.h, inst.w, inst.annotation, m0, config);

    MixingSet m_expect = m0;
    for (std::size_t n = 0; n < m_expect.per_np.size(); ++n)
        for (std::size_t i = 0; i < m_expect.per_np[n].data().size(); ++i)
            m_expect.per_np[n].data()[i] -= config.eta * g.d_mixing[n].data()[i];
    m_expect = clamp_mixing(std::move(m_expect));
    Matrix h_expect = inst.h;
    for (std::size_t i = 0; i < h_expect.data().size(); ++i)
        h_expect.data()[i] -= config.eta * g.d_latents->data()[i];
    Matrix t_expect = inst.t;
    std::vector<std::size_t> aux = {*inst.annotation.eot_index};
    aux.insert(aux.end(), inst.annotation.pad_indices.begin(),
               inst.annotation.pad_indices.end());
    for (std::size_t r : aux)
        for (std::size_t c = 0; c < t_expect.cols(); ++c)
            t_expect(r, c) -= config.eta * g.d_tokens(r, c);

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    REQUIRE(res.trace.size() == 2);
    REQUIRE(res.mixing == m_expect);
    REQUIRE(res.latents.data() == h_expect.data());
    REQUIRE(res.tokens.data() ==
            apply_mixing(t_expect, inst.annotation, m_expect).data());
}

TEST_CASE("optimize_binding respects the optimization switches", "[optim]") {
    const SynthInstance inst = bundled_instance();
    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.steps = 3;
    config.optimize_latents = false;
    config.optimize_aux_tokens = false;

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    REQUIRE(res.latents.data() == inst.h.data());
    const std::size_t eot = *inst.annotation.eot_index;
    for (std::size_t c = 0; c < inst.t.cols(); ++c)
        REQUIRE(res.tokens(eot, c) == inst.t(eot, c));
    for (std::size_t p : inst.annotation.pad_indices)
        for (std::size_t c = 0; c < inst.t.cols(); ++c)
            REQUIRE(res.tokens(p, c) == inst.t(p, c));
}

TEST_CASE("optimize_binding keeps mixing entries inside the clamp bound", "[optim]") {
    const SynthInstance inst = bundled_instance();
    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.steps = 5;
    config.eta = 50.0; // deliberately overshoots
    config.clamp_bound = 2.0;

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    bool hit_bound = false;
    for (const auto& mv : res.mixing.per_np)
        for (double v : mv.data()) {
            REQUIRE(std::abs(v) <= 2.0);
            hit_bound = hit_bound || std::abs(v) == 2.0;
        }
    REQUIRE(hit_bound);
}

TEST_CASE("optimize_binding improves the bundled instance", "[optim]") {
    const SynthInstance inst = bundled_instance();
    const BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    REQUIRE(config.lambda == 0.01);
    REQUIRE(config.eta == 0.05);
    REQUIRE(config.steps == 200);

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    REQUIRE(res.trace.size() == 201);
    REQUIRE(res.trace.back().total < res.trace.front().total);

    // per-object entropy and per-pair overlap both end lower than they start
    const AttentionState before = cross_attention_maps(inst.h, inst.t, inst.w);
    const AttentionState after = cross_attention_maps(res.latents, res.tokens, inst.w);
    for (const auto& np : inst.annotation.nps) {
        const std::size_t k = np.object_index;
        REQUIRE(shannon_entropy(token_distribution(after, k)) <
                shannon_entropy(token_distribution(before, k)));
    }
    for (auto [m, n] : inter_np_pairs(inst.annotation)) {
        REQUIRE(bhattacharyya_coeff(token_distribution(after, m),
                                    token_distribution(after, n)) <
                bhattacharyya_coeff(token_distribution(before, m),
                                    token_distribution(before, n)));
    }
}

TEST_CASE("backtracking yields a non-increasing loss trace", "[optim]") {
    const SynthInstance inst = bundled_instance();
    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.steps = 40;
    config.eta = 10.0; // plain GD at this rate oscillates
    config.backtracking = true;

    const OptimizeResult res =
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
    REQUIRE(res.trace.size() == 41);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        REQUIRE(res.trace[i].total <= res.trace[i - 1].total);
}

TEST_CASE("optimize_binding reports NonFiniteLoss with the failing step", "[optim]") {
    SynthParams params;
    params.n_nps = 3;
    params.np_size = 1;
    const SynthInstance inst = gen_instance(params, 63);

    BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
    config.lambda = 1e308; // lambda * bhat overflows for >= 2 coexisting pairs
    try {
        optimize_binding(inst.t, inst.h, inst.w, inst.annotation, config);
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::NonFiniteLoss);
        REQUIRE(e.numerical());
        REQUIRE(std::string(e.what()).find("step 0") != std::string::npos);
    }
}
