#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokenbind/atm.hpp"
#include "tokenbind/attention.hpp"
#include "tokenbind/geometry.hpp"
#include "tokenbind/optim.hpp"
#include "tokenbind/prompt.hpp"
#include "tokenbind/rng.hpp"
#include "tokenbind/synth.hpp"

namespace tokenbind {

struct VerifyOutcome {
    bool pass = false;
    nlohmann::json report;
};

namespace detail {

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.next_u64() % (hi - lo + 1));
}

} // namespace detail

/// prop1: increasing the distance between t_j and t_i (along a fixed
/// direction) monotonically increases D_KL(A_i || A_j), and at small s the KL
/// matches the second-order quadratic form 1/2 s^2 Var_A(g), where
/// g_b = <c_b, W_K^T dt> over latent positions b. Each trial derives its own
/// substream so trials are order-independent. quad_tol is the relative
/// tolerance on the s = 0.01 quadratic-form match (0.05 by default).
inline VerifyOutcome verify_prop1(std::size_t trials = 100, std::uint64_t seed = 1,
                                  double quad_tol = 0.05) {
    if (quad_tol <= 0.0) fail(Errc::NonPositiveScale, "verify_prop1: quad_tol must be > 0");
    const Rng root(seed);
    std::size_t monotone_ok = 0, quad_ok = 0;
    double worst_violation = 0.0, worst_quad_err = 0.0;

    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = root.substream(trial);
        const std::size_t n = detail::uniform_index(rng, 4, 32);
        const std::size_t l = detail::uniform_index(rng, 2, 8);
        const std::size_t d = detail::uniform_index(rng, 2, 16);
        const std::size_t d1 = detail::uniform_index(rng, 2, 16);

        const Matrix h = rng.gaussian_matrix(n, d);
        const Matrix w_k = rng.gaussian_matrix(d1, d, 1.0 / std::sqrt(double(d1)));
        Matrix t = rng.gaussian_matrix(l, d1);
        std::vector<double> dt = rng.gaussian_vector(d1);
        const double dt_norm = norm2(dt);
        for (double& v : dt) v /= dt_norm;

        for (std::size_t c = 0; c < d1; ++c) t(1, c) = t(0, c); // base state: t_j = t_i

        ProjectionWeights w{Matrix::identity(d), w_k, w_k, d};

        // Quadratic form from the base state's shared distribution A.
        const AttentionState base = cross_attention_maps(h, t, w);
        const std::vector<double> a = token_distribution(base, 0);
        std::vector<double> dt_wk(d, 0.0);
        for (std::size_t r = 0; r < d1; ++r)
            for (std::size_t c = 0; c < d; ++c) dt_wk[c] += dt[r] * w_k(r, c);
        const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
        std::vector<double> g(n);
        double g_bar = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            g[b] = dot(h.row(b), dt_wk) * inv_sqrt_d;
            g_bar += a[b] * g[b];
        }
        double var_g = 0.0;
        for (std::size_t b = 0; b < n; ++b) var_g += a[b] * (g[b] - g_bar) * (g[b] - g_bar);

        std::vector<double> kl_grid;
        for (int k = 1; k <= 20; ++k) {
            const double s = 0.01 * k;
            Matrix ts = t;
            for (std::size_t c = 0; c < d1; ++c) ts(1, c) = t(0, c) + s * dt[c];
            const AttentionState st = cross_attention_maps(h, ts, w);
            kl_grid.push_back(
                kl_divergence(token_distribution(st, 0), token_distribution(st, 1)));
        }

        bool monotone = true;
        for (std::size_t k = 1; k < kl_grid.size(); ++k) {
            if (kl_grid[k] < kl_grid[k - 1] - 1e-12) {
                monotone = false;
                worst_violation = std::max(worst_violation, kl_grid[k - 1] - kl_grid[k]);
            }
        }
        if (monotone) ++monotone_ok;

        const double quad = 0.5 * var_g * 0.01 * 0.01;
        const double rel = std::abs(kl_grid[0] - quad) / kl_grid[0];
        worst_quad_err = std::max(worst_quad_err, rel);
        if (rel < quad_tol) ++quad_ok;
    }

    VerifyOutcome out;
    out.pass = (monotone_ok == trials) && (quad_ok * 100 >= trials * 95);
    out.report = {{"suite", "prop1"},
                  {"trials", trials},
                  {"monotone_ok", monotone_ok},
                  {"quadratic_form_ok", quad_ok},
                  {"quad_tol", quad_tol},
                  {"worst_monotonicity_violation", worst_violation},
                  {"worst_quadratic_rel_error", worst_quad_err},
                  {"pass", out.pass}};
    return out;
}

/// prop2: with equal norms r, cos(theta) < 0.5 and lambda_i, lambda_j > 1,
/// scaling strictly increases the squared distance, and unit scaling
/// reproduces it bit-for-bit. The assumption boundary (cos >= 0.5, lambdas
/// straddling 1) is explored and counterexamples are counted without
/// asserting.
inline VerifyOutcome verify_prop2(std::size_t trials = 100000, std::uint64_t seed = 2) {
    const Rng root(seed);
    std::size_t holds = 0, unit_scale_exact = 0;
    std::size_t boundary_trials = 0, boundary_counterexamples = 0;

    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = root.substream(trial);
        const double r = rng.uniform(0.5, 3.0);
        const double cos_th = rng.uniform(-1.0, 0.5);
        const double sin_th = std::sqrt(std::max(0.0, 1.0 - cos_th * cos_th));
        // lambdas start at 1.001 so strictness sits above float noise
        const double li = rng.uniform(1.001, 3.0);
        const double lj = rng.uniform(1.001, 3.0);

        const double ti[2] = {r, 0.0};
        const double tj[2] = {r * cos_th, r * sin_th};
        auto sqdist = [](double ax, double ay, double bx, double by) {
            return (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
        };
        const double before = sqdist(ti[0], ti[1], tj[0], tj[1]);
        const double after = sqdist(li * ti[0], li * ti[1], lj * tj[0], lj * tj[1]);
        if (after > before) ++holds;
        // lambda_i = lambda_j = 1 must reproduce the distance bit-for-bit
        if (sqdist(1.0 * ti[0], 1.0 * ti[1], 1.0 * tj[0], 1.0 * tj[1]) == before)
            ++unit_scale_exact;

        // Boundary probe (recorded, never asserted): with cos >= 0.5 and the
        // lambdas allowed to dip just below 1, the strict inequality really
        // does fail in a fraction of configurations — the lambda > 1
        // assumption is load-bearing, not decorative.
        const double bcos = rng.uniform(0.5, 1.0);
        const double bsin = std::sqrt(std::max(0.0, 1.0 - bcos * bcos));
        const double bli = rng.uniform(0.95, 1.05), blj = rng.uniform(0.95, 1.05);
        ++boundary_trials;
        if (sqdist(bli * r, 0.0, blj * r * bcos, blj * r * bsin) * (1.0 + 1e-12) <
            sqdist(r, 0.0, r * bcos, r * bsin))
            ++boundary_counterexamples;
    }

    VerifyOutcome out;
    out.pass = holds == trials && unit_scale_exact == trials;
    out.report = {{"suite", "prop2"},
                  {"trials", trials},
                  {"strict_inequality_holds", holds},
                  {"unit_scale_exact", unit_scale_exact},
                  {"boundary_trials", boundary_trials},
                  {"boundary_counterexamples", boundary_counterexamples},
                  {"pass", out.pass}};
    return out;
}

/// remark1: for near-zero-mean Gaussian tokens, addition and subtraction
/// both increase the expected norm; with mu = 0 the ratio is exactly sqrt(2)
/// and E||t|| matches the chi-distribution mean.
inline VerifyOutcome verify_remark1(std::size_t dim = 64, std::size_t samples = 100000,
                                    std::uint64_t seed = 3) {
    if (dim < 8) fail(Errc::DimensionMismatch, "verify_remark1: dim must be >= 8");
    if (samples < 10000) fail(Errc::DimensionMismatch, "verify_remark1: samples must be >= 1e4");

    struct Acc {
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0;
        void add(double v) { sum += v; sumsq += v * v; ++n; }
        double mean() const { return sum / double(n); }
        double se() const {
            const double var = sumsq / double(n) - mean() * mean();
            return std::sqrt(std::max(var, 0.0) / double(n));
        }
    };

    const Rng root(seed);
    Acc zi, zsum, zdiff;                  // mu = 0
    Acc mi, mj, msum, mdiff;              // small mu
    std::vector<double> mu = Rng(seed ^ 0xABCDEF).gaussian_vector(dim);
    const double mu_scale = 0.5 / norm2(mu);
    for (double& v : mu) v *= mu_scale;

    for (std::size_t trial = 0; trial < samples; ++trial) {
        Rng rng = root.substream(trial);
        std::vector<double> ti = rng.gaussian_vector(dim);
        std::vector<double> tj = rng.gaussian_vector(dim);
        double nsum = 0.0, ndiff = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            nsum += (ti[c] + tj[c]) * (ti[c] + tj[c]);
            ndiff += (ti[c] - tj[c]) * (ti[c] - tj[c]);
        }
        zi.add(norm2(ti));
        zsum.add(std::sqrt(nsum));
        zdiff.add(std::sqrt(ndiff));

        double ni = 0.0, nj = 0.0;
        nsum = ndiff = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double a = ti[c] + mu[c], b = tj[c] + mu[c];
            ni += a * a;
            nj += b * b;
            nsum += (a + b) * (a + b);
            ndiff += (a - b) * (a - b);
        }
        mi.add(std::sqrt(ni));
        mj.add(std::sqrt(nj));
        msum.add(std::sqrt(nsum));
        mdiff.add(std::sqrt(ndiff));
    }

    const double chi_mean =
        std::sqrt(2.0) * std::exp(std::lgamma((double(dim) + 1.0) / 2.0) -
                                  std::lgamma(double(dim) / 2.0));
    const double ratio = zsum.mean() / zi.mean();
    const double chi_rel = std::abs(zi.mean() - chi_mean) / chi_mean;
    auto margin = [](const Acc& hi, const Acc& lo) {
        return (hi.mean() - lo.mean()) / std::sqrt(hi.se() * hi.se() + lo.se() * lo.se());
    };
    const double margins[4] = {margin(msum, mi), margin(msum, mj), margin(mdiff, mi),
                               margin(mdiff, mj)};
    const double zero_margins[2] = {margin(zsum, zi), margin(zdiff, zi)};

    bool pass = ratio >= 1.40 && ratio <= 1.43 && chi_rel < 0.005;
    for (double m : margins) pass = pass && m > 3.0;
    for (double m : zero_margins) pass = pass && m > 3.0;

    VerifyOutcome out;
    out.pass = pass;
    out.report = {{"suite", "remark1"},
                  {"dim", dim},
                  {"samples", samples},
                  {"mean_norm_zero_mu", zi.mean()},
                  {"chi_distribution_mean", chi_mean},
                  {"chi_rel_error", chi_rel},
                  {"sum_over_single_ratio", ratio},
                  {"margins_small_mu_sigmas",
                   nlohmann::json::array({margins[0], margins[1], margins[2], margins[3]})},
                  {"margins_zero_mu_sigmas",
                   nlohmann::json::array({zero_margins[0], zero_margins[1]})},
                  {"pass", out.pass}};
    return out;
}

/// Embedding-regime statistics over inter-NP object pairs: the norm-ratio
/// 2|..|/(..+..), cosine similarities, and the mean-vector norm against token
/// norms. Descriptive — the verdict only reflects input validity.
inline VerifyOutcome verify_assumptions(const Matrix& t, const PromptAnnotation& annotation) {
    annotation.validate();
    if (annotation.token_count != t.rows())
        fail(Errc::ShapeMismatch, "verify_assumptions: annotation vs embedding rows");

    nlohmann::json pairs = nlohmann::json::array();
    std::vector<double> cosines, ratios;
    for (auto [i, j] : inter_np_pairs(annotation)) {
        const double ni = norm2(t.row(i)), nj = norm2(t.row(j));
        const double ratio = 2.0 * std::abs(ni - nj) / (ni + nj);
        const double cosine = dot(t.row(i), t.row(j)) / (ni * nj);
        ratios.push_back(ratio);
        cosines.push_back(cosine);
        pairs.push_back({{"i", i}, {"j", j}, {"norm_ratio", ratio}, {"cosine", cosine}});
    }

    std::vector<double> mean_vec(t.cols(), 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) mean_vec[c] += t(r, c) / double(t.rows());
    double norm_sum = 0.0;
    for (std::size_t r = 0; r < t.rows(); ++r) norm_sum += norm2(t.row(r));
    const double mean_token_norm = norm_sum / double(t.rows());
    const double mu_norm = norm2(mean_vec);

    VerifyOutcome out;
    out.pass = true;
    out.report = {{"suite", "assumptions"},
                  {"pairs", pairs},
                  {"median_cosine", cosines.empty() ? 0.0 : median(cosines)},
                  {"median_norm_ratio", ratios.empty() ? 0.0 : median(ratios)},
                  {"mean_vector_norm", mu_norm},
                  {"mean_token_norm", mean_token_norm},
                  {"mean_vector_vs_token_norm", mu_norm / mean_token_norm},
                  {"cosines_below_half",
                   std::count_if(cosines.begin(), cosines.end(), [](double c) { return c < 0.5; })},
                  {"pass", true}};
    return out;
}

/// Gradient suite: central finite differences (h = 1e-5) against the analytic
/// bundle on every mixing entry, latent coordinate and aux-token coordinate.
/// Relative error uses a 1e-3 denominator floor, which turns into a 1e-8
/// absolute gate for near-zero coordinates (far below any real chain bug, far
/// above FD roundoff).
inline VerifyOutcome verify_gradients(std::size_t trials = 50, std::uint64_t seed = 4) {
    constexpr double kH = 1e-5;
    constexpr double kGate = 1e-5;
    const Rng root(seed);
    double worst = 0.0;
    std::size_t coords = 0;

    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = root.substream(trial);
        SynthParams p;
        p.n_nps = 2;
        p.np_size = detail::uniform_index(rng, 1, 3);
        p.n_latents = detail::uniform_index(rng, 4, 8);
        p.d_text = detail::uniform_index(rng, 4, 10);
        p.d_latent = detail::uniform_index(rng, 4, 10);
        p.d_inner = detail::uniform_index(rng, 2, 8);
        SynthInstance inst = gen_instance(p, rng.next_u64());

        BindingConfig config;
        config.lambda = (trial % 3 == 0) ? 0.0 : 0.01 * double(1 + trial % 5);
        config.optimize_latents = true;
        config.optimize_aux_tokens = true;

        MixingSet m = init_mixing(inst.annotation);
        for (auto& mat : m.per_np)
            for (double& v : mat.data()) v += 0.1 * rng.gaussian();

        const GradientBundle g =
            grad_total_loss(inst.t, inst.h, inst.w, inst.annotation, m, config);

        auto loss_at = [&](const Matrix& t, const Matrix& h, const MixingSet& mm) {
            return detail::forward(t, h, inst.w, inst.annotation, mm, config.lambda).loss.total;
        };
        auto rel_err = [&](double analytic, double fd) {
            return std::abs(analytic - fd) /
                   std::max({std::abs(analytic), std::abs(fd), 1e-3});
        };

        for (std::size_t n = 0; n < m.per_np.size(); ++n) {
            for (std::size_t idx = 0; idx < m.per_np[n].data().size(); ++idx) {
                MixingSet mp = m, mn = m;
                mp.per_np[n].data()[idx] += kH;
                mn.per_np[n].data()[idx] -= kH;
                const double fd =
                    (loss_at(inst.t, inst.h, mp) - loss_at(inst.t, inst.h, mn)) / (2 * kH);
                worst = std::max(worst, rel_err(g.d_mixing[n].data()[idx], fd));
                ++coords;
            }
        }
        for (std::size_t idx = 0; idx < inst.h.data().size(); ++idx) {
            Matrix hp = inst.h, hn = inst.h;
            hp.data()[idx] += kH;
            hn.data()[idx] -= kH;
            const double fd = (loss_at(inst.t, hp, m) - loss_at(inst.t, hn, m)) / (2 * kH);
            worst = std::max(worst, rel_err(g.d_latents->data()[idx], fd));
            ++coords;
        }
        std::vector<std::size_t> aux;
        if (inst.annotation.eot_index) aux.push_back(*inst.annotation.eot_index);
        for (std::size_t pd : inst.annotation.pad_indices) aux.push_back(pd);
        for (std::size_t r : aux) {
            for (std::size_t c = 0; c < inst.t.cols(); ++c) {
                Matrix tp = inst.t, tn = inst.t;
                tp(r, c) += kH;
                tn(r, c) -= kH;
                const double fd = (loss_at(tp, inst.h, m) - loss_at(tn, inst.h, m)) / (2 * kH);
                worst = std::max(worst, rel_err(g.d_tokens(r, c), fd));
                ++coords;
            }
        }
    }

    VerifyOutcome out;
    out.pass = worst < kGate;
    out.report = {{"suite", "gradients"}, {"trials", trials},
                  {"coordinates_checked", coords}, {"fd_step", kH},
                  {"worst_rel_error", worst}, {"gate", kGate},
                  {"pass", out.pass}};
    return out;
}

struct ReweightReport {
    Matrix left;
    Matrix right;
    double max_rel_divergence = 0.0;
    double mean_rel_divergence = 0.0;
};

/// Attention-reweighting identity, both sides: left = (alpha applied to the
/// attention columns) V,
/// right = softmax with alpha-scaled keys times alpha-scaled values. The two
/// are only approximately equal for alpha != 1; this reports the gap.
inline ReweightReport reweight_equivalence_check(const Matrix& h, const Matrix& t,
                                                 const ProjectionWeights& w,
                                                 const std::vector<double>& alphas) {
    w.validate();
    if (alphas.size() != t.rows())
        fail(Errc::SizeMismatch, "reweight_equivalence_check: one alpha per text token");
    const Matrix q = matmul(h, w.w_q);
    const Matrix k = matmul(t, w.w_k);
    const Matrix v = matmul(t, w.w_v);
    const double inv_sqrt_d = 1.0 / std::sqrt(double(w.d));

    Matrix logits = matmul_nt(q, k);
    for (double& x : logits.data()) x *= inv_sqrt_d;
    Matrix p = softmax_rows(logits);
    Matrix p_scaled = p;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) p_scaled(i, j) *= alphas[j];

    Matrix k_scaled = k, v_scaled = v;
    for (std::size_t j = 0; j < k.rows(); ++j)
        for (std::size_t c = 0; c < k.cols(); ++c) {
            k_scaled(j, c) *= alphas[j];
            v_scaled(j, c) *= alphas[j];
        }
    Matrix logits2 = matmul_nt(q, k_scaled);
    for (double& x : logits2.data()) x *= inv_sqrt_d;

    ReweightReport rep;
    rep.left = matmul(p_scaled, v);
    rep.right = matmul(softmax_rows(logits2), v_scaled);
    double acc = 0.0;
    for (std::size_t i = 0; i < rep.left.data().size(); ++i) {
        const double l = rep.left.data()[i], r = rep.right.data()[i];
        const double rel = std::abs(l - r) / std::max({std::abs(l), std::abs(r), 1e-12});
        rep.max_rel_divergence = std::max(rep.max_rel_divergence, rel);
        acc += rel;
    }
    rep.mean_rel_divergence = acc / double(rep.left.data().size());
    return rep;
}

inline ReweightReport reweight_equivalence_check(const Matrix& h, const Matrix& t,
                                                 const ProjectionWeights& w, double alpha,
                                                 std::size_t token_index) {
    if (token_index >= t.rows())
        fail(Errc::IndexOutOfRange, "reweight_equivalence_check: token index out of range");
    std::vector<double> alphas(t.rows(), 1.0);
    alphas[token_index] = alpha;
    return reweight_equivalence_check(h, t, w, alphas);
}

/// Re-interpretation checks: the ToMe merge as a fixed mixing instance
/// reproduces the direct linear combination, and the attention reweighting
/// identity is exact at alpha = 1 and for a single text token.
inline VerifyOutcome verify_reweight(std::uint64_t seed = 5) {
    Rng rng(seed);

    SynthInstance inst = gen_instance(SynthParams{}, rng.next_u64());

    // ToMe merge: every NP token becomes alpha*u_obj + beta*sum(attrs).
    const MixingSet tome = tome_mixing_set(inst.annotation, 1.1, 1.2);
    const Matrix merged = apply_mixing(inst.t, inst.annotation, tome);
    double tome_err = 0.0;
    for (const auto& np : inst.annotation.nps) {
        for (std::size_t c = 0; c < inst.t.cols(); ++c) {
            double direct = 1.1 * inst.t(np.object_index, c);
            for (std::size_t a : np.attribute_indices) direct += 1.2 * inst.t(a, c);
            for (std::size_t i = np.span_begin; i < np.span_end; ++i)
                tome_err = std::max(tome_err, std::abs(merged(i, c) - direct));
        }
    }
    const bool tome_ok = tome_err < 1e-14;

    const auto unit = reweight_equivalence_check(inst.h, inst.t, inst.w,
                                                 std::vector<double>(inst.t.rows(), 1.0));
    const bool alpha1_ok = unit.max_rel_divergence == 0.0;

    SynthParams single;
    single.n_nps = 1;
    single.np_size = 1;
    single.n_pads = 0;
    SynthInstance one = gen_instance(single, rng.next_u64());
    Matrix t1(1, one.t.cols());
    for (std::size_t c = 0; c < one.t.cols(); ++c) t1(0, c) = one.t(0, c);
    const auto l1 = reweight_equivalence_check(one.h, t1, one.w, {1.7});
    const bool l1_ok = l1.max_rel_divergence == 0.0;

    const auto generic = reweight_equivalence_check(inst.h, inst.t, inst.w, 1.5,
                                                    inst.annotation.nps[0].object_index);
    const bool generic_ok = generic.left.finite() && generic.right.finite();

    VerifyOutcome out;
    out.pass = tome_ok && alpha1_ok && l1_ok && generic_ok;
    out.report = {{"suite", "reweight"},
                  {"tome_max_abs_error", tome_err},
                  {"tome_ok", tome_ok},
                  {"alpha_one_divergence", unit.max_rel_divergence},
                  {"single_token_divergence", l1.max_rel_divergence},
                  {"generic_alpha_divergence", generic.max_rel_divergence},
                  {"pass", out.pass}};
    return out;
}

} // namespace tokenbind
