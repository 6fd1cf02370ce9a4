#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tokenbind/synth.hpp"
#include "tokenbind/verify.hpp"

using namespace tokenbind;

TEST_CASE("verify_prop1 passes at its default scale", "[verify]") {
    const VerifyOutcome out = verify_prop1(100, 1);
    REQUIRE(out.pass);
    REQUIRE(out.report.at("monotone_ok").get<std::size_t>() == 100);
    REQUIRE(out.report.at("quadratic_form_ok").get<std::size_t>() >= 95);
    REQUIRE(out.report.at("worst_quadratic_rel_error").get<double>() < 1.0);
    REQUIRE(out.report.at("pass").get<bool>());
}

TEST_CASE("verify_prop1 is deterministic and tunable", "[verify]") {
    const VerifyOutcome a = verify_prop1(20, 9);
    const VerifyOutcome b = verify_prop1(20, 9);
    REQUIRE(a.report.dump() == b.report.dump());

    // an impossible quadratic tolerance turns the suite into a guaranteed fail
    const VerifyOutcome strict = verify_prop1(20, 9, 1e-12);
    REQUIRE_FALSE(strict.pass);
    REQUIRE(strict.report.at("quad_tol").get<double>() == 1e-12);

    try {
        verify_prop1(10, 1, 0.0);
        FAIL("expected NonPositiveScale");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::NonPositiveScale);
    }
}

TEST_CASE("verify_prop2 strict inequality and exact unit-scale equality", "[verify]") {
    const VerifyOutcome out = verify_prop2(20000, 2);
    REQUIRE(out.pass);
    REQUIRE(out.report.at("strict_inequality_holds").get<std::size_t>() == 20000);
    REQUIRE(out.report.at("unit_scale_exact").get<std::size_t>() == 20000);
    // outside the assumed regime the inequality actually does fail sometimes,
    // which is what makes the in-regime 100% meaningful
    REQUIRE(out.report.at("boundary_counterexamples").get<std::size_t>() > 0);

    const VerifyOutcome again = verify_prop2(20000, 2);
    REQUIRE(out.report.dump() == again.report.dump());
}

TEST_CASE("verify_remark1 hits the analytic targets", "[verify]") {
    const VerifyOutcome out = verify_remark1(64, 100000, 3);
    REQUIRE(out.pass);
    const double ratio = out.report.at("sum_over_single_ratio").get<double>();
    REQUIRE(ratio >= 1.40);
    REQUIRE(ratio <= 1.43);
    REQUIRE(out.report.at("chi_rel_error").get<double>() < 0.005);
    for (const auto& m : out.report.at("margins_small_mu_sigmas"))
        REQUIRE(m.get<double>() > 3.0);

    try {
        verify_remark1(4, 100000, 3);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::DimensionMismatch);
    }
    try {
        verify_remark1(64, 100, 3);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::DimensionMismatch);
    }
}

TEST_CASE("verify_assumptions reports the geometric regime", "[verify]") {
    SynthParams p;
    p.n_nps = 8;
    const SynthInstance inst = gen_instance(p, 6);
    const VerifyOutcome out = verify_assumptions(inst.t, inst.annotation);
    REQUIRE(out.pass); // descriptive suite: pass reflects input validity only
    REQUIRE(out.report.at("pairs").size() == 8 * 7 / 2);
    // the generator is built to sit inside the assumed regime
    REQUIRE(out.report.at("median_cosine").get<double>() < 0.5);
    REQUIRE(out.report.at("median_norm_ratio").get<double>() < 0.5);
    REQUIRE(out.report.at("mean_vector_vs_token_norm").get<double>() < 1.0);

    try {
        verify_assumptions(Matrix(3, 4), inst.annotation);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("a wide zero-mean Gaussian corpus has object cosines centered on zero", "[verify]") {
    SynthParams p;
    p.n_nps = 8;
    p.d_text = 64;
    p.mean_norm = 0.0; // shared mean would bias every pairwise cosine upward
    const SynthInstance inst = gen_instance(p, 11);
    const VerifyOutcome out = verify_assumptions(inst.t, inst.annotation);

    std::vector<double> cosines;
    for (const auto& pair : out.report.at("pairs"))
        cosines.push_back(pair.at("cosine").get<double>());
    REQUIRE(cosines.size() == 28);
    double mean = 0.0;
    for (double c : cosines) mean += c;
    mean /= double(cosines.size());
    double var = 0.0;
    for (double c : cosines) var += (c - mean) * (c - mean);
    const double se = std::sqrt(var / (cosines.size() - 1)) / std::sqrt(double(cosines.size()));
    REQUIRE(std::abs(mean) <= 3.0 * se);
    REQUIRE(out.report.at("cosines_below_half").get<std::size_t>() == 28);
}

TEST_CASE("verify_gradients agrees with finite differences", "[verify]") {
    const VerifyOutcome out = verify_gradients(8, 4);
    REQUIRE(out.pass);
    REQUIRE(out.report.at("worst_rel_error").get<double>() < 1e-5);
    REQUIRE(out.report.at("coordinates_checked").get<std::size_t>() > 100);

    const VerifyOutcome again = verify_gradients(8, 4);
    REQUIRE(out.report.dump() == again.report.dump());
}

TEST_CASE("verify_reweight exactness claims", "[verify]") {
    const VerifyOutcome out = verify_reweight(5);
    REQUIRE(out.pass);
    REQUIRE(out.report.at("tome_max_abs_error").get<double>() < 1e-14);
    REQUIRE(out.report.at("alpha_one_divergence").get<double>() == 0.0);
    REQUIRE(out.report.at("single_token_divergence").get<double>() == 0.0);
    REQUIRE(out.report.at("generic_alpha_divergence").get<double>() > 0.0);
}

TEST_CASE("reweight_equivalence_check direct properties", "[verify]") {
    const SynthInstance inst = bundled_instance();

    SECTION("all-ones alpha vector is bitwise neutral") {
        const ReweightReport rep = reweight_equivalence_check(
            inst.h, inst.t, inst.w, std::vector<double>(inst.t.rows(), 1.0));
        REQUIRE(rep.max_rel_divergence == 0.0);
        REQUIRE(rep.mean_rel_divergence == 0.0);
        REQUIRE(rep.left.data() == rep.right.data());
    }

    SECTION("generic alpha produces a small but nonzero gap") {
        const ReweightReport rep = reweight_equivalence_check(
            inst.h, inst.t, inst.w, 1.5, inst.annotation.nps[0].object_index);
        REQUIRE(rep.max_rel_divergence > 0.0);
        REQUIRE(rep.left.finite());
        REQUIRE(rep.right.finite());
    }

    SECTION("argument validation") {
        try {
            reweight_equivalence_check(inst.h, inst.t, inst.w, {1.0, 2.0});
            FAIL("expected SizeMismatch");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::SizeMismatch);
        }
        try {
            reweight_equivalence_check(inst.h, inst.t, inst.w, 1.5, inst.t.rows());
            FAIL("expected IndexOutOfRange");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::IndexOutOfRange);
        }
    }
}
