// bindctl — command-line surface for the semantic-binding toolkit.
//
// Exit codes: 0 success, 1 input/validation error, 2 numerical failure,
// 3 verification-suite failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokenbind/tokenbind.hpp"

namespace fs = std::filesystem;
using namespace tokenbind;

namespace {

std::string read_text(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write_file_bytes(path.string(), bytes);
}

ProjectionWeights load_weights(const std::string& wq_path, const std::string& wk_path,
                               const std::string& wv_path) {
    ProjectionWeights w;
    w.w_q = read_embx_file(wq_path).matrix;
    w.w_k = read_embx_file(wk_path).matrix;
    w.w_v = read_embx_file(wv_path).matrix;
    w.d = w.w_q.cols();
    w.validate();
    return w;
}

struct CommonFlags {
    std::string config_path;
    std::string mode;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config_path, "JSON config file");
    sub->add_option("--mode", f.mode, "causal|noncausal")
        ->check(CLI::IsMember({"causal", "noncausal"}));
    sub->add_option("--seed", f.seed, "seed override")->each([&f](const std::string&) {
        f.seed_given = true;
    });
    sub->add_option("--out", f.out_dir, "output directory");
}

BindingConfig resolve_config(const CommonFlags& f) {
    BindingConfig config;
    if (!f.config_path.empty()) {
        config = load_config(read_text(f.config_path));
        if (!f.mode.empty())
            config.causality =
                f.mode == "causal" ? CausalityMode::Causal : CausalityMode::NonCausal;
    } else {
        const CausalityMode mode =
            f.mode == "noncausal" ? CausalityMode::NonCausal : CausalityMode::Causal;
        config = BindingConfig::defaults(mode);
    }
    if (f.seed_given) config.seed = f.seed;
    return config;
}

fs::path ensure_out(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void emit(const CommonFlags& f, const std::string& filename, const std::string& text) {
    if (f.out_dir.empty()) {
        std::cout << text;
    } else {
        write_text(ensure_out(f.out_dir) / filename, text);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantic binding toolkit: cross-attention losses, projection-out, "
                 "token mixing, and the verification suites"};
    app.require_subcommand(1);
    int rc = 0;

    // parse ------------------------------------------------------------
    auto* parse_cmd = app.add_subcommand("parse", "parse a template prompt into an annotation");
    std::vector<std::string> parse_words;
    CommonFlags parse_flags;
    parse_cmd->add_option("prompt", parse_words, "prompt words")->required()->expected(-1);
    add_common(parse_cmd, parse_flags);
    parse_cmd->callback([&] {
        std::vector<std::string> words;
        for (const auto& chunk : parse_words)
            for (auto& w : split_words(chunk)) words.push_back(w);
        const PromptAnnotation ann = parse_template_prompt(words, Lexicon::basic());
        emit(parse_flags, "annotation.json", save_annotation(ann));
    });

    // gen ----------------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic instance");
    CommonFlags gen_flags;
    SynthParams gen_params;
    add_common(gen_cmd, gen_flags);
    gen_cmd->add_option("--nps", gen_params.n_nps, "number of noun phrases");
    gen_cmd->add_option("--np-size", gen_params.np_size, "tokens per noun phrase");
    gen_cmd->add_option("--latents", gen_params.n_latents, "latent positions N");
    gen_cmd->add_option("--d-text", gen_params.d_text, "token embedding dim");
    gen_cmd->add_option("--d-latent", gen_params.d_latent, "latent dim");
    gen_cmd->add_option("--d-inner", gen_params.d_inner, "attention inner dim");
    gen_cmd->add_option("--pads", gen_params.n_pads, "pad token count");
    gen_cmd->add_option("--mean-norm", gen_params.mean_norm, "token mean norm");
    gen_cmd->callback([&] {
        if (gen_flags.out_dir.empty())
            fail(Errc::ParseError, "gen: --out directory is required");
        const std::uint64_t seed = gen_flags.seed_given ? gen_flags.seed : 20240901;
        const SynthInstance inst = gen_instance(gen_params, seed);
        const fs::path out = ensure_out(gen_flags.out_dir);
        write_embx_file((out / "t.embx").string(), inst.t);
        write_embx_file((out / "h.embx").string(), inst.h);
        write_embx_file((out / "wq.embx").string(), inst.w.w_q);
        write_embx_file((out / "wk.embx").string(), inst.w.w_k);
        write_embx_file((out / "wv.embx").string(), inst.w.w_v);
        write_text(out / "annotation.json", save_annotation(inst.annotation));
        BindingConfig config = BindingConfig::defaults(CausalityMode::Causal);
        config.seed = seed;
        write_text(out / "config.json", config_to_json(config).dump(2) + "\n");
        std::string prompt;
        for (const auto& w : inst.words) prompt += (prompt.empty() ? "" : " ") + w;
        write_text(out / "prompt.txt", prompt + "\n");
    });

    // orthogonalize -------------------------------------------------------
    auto* orth_cmd = app.add_subcommand("orthogonalize", "apply projection-out across NPs");
    CommonFlags orth_flags;
    std::string orth_embeddings, orth_annotation;
    orth_cmd->add_option("--embeddings", orth_embeddings, "token embeddings (EMBX)")->required();
    orth_cmd->add_option("--annotation", orth_annotation, "annotation JSON")->required();
    add_common(orth_cmd, orth_flags);
    orth_cmd->callback([&] {
        const BindingConfig config = resolve_config(orth_flags);
        const EmbxData t = read_embx_file(orth_embeddings);
        const PromptAnnotation ann = load_annotation(read_text(orth_annotation));
        const CapoResult res =
            apply_capo(t.matrix, ann, config.causality, config.capo_options());
        nlohmann::json events = nlohmann::json::array();
        for (const auto& e : res.events)
            events.push_back({{"np", e.np_index}, {"token", e.token_index}, {"what", e.what}});
        nlohmann::json j{{"mode", causality_name(config.causality)}, {"events", events}};
        if (orth_flags.out_dir.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            const fs::path out = ensure_out(orth_flags.out_dir);
            write_embx_file((out / "orthogonalized.embx").string(), res.tokens, t.dtype);
            write_text(out / "events.json", j.dump(2) + "\n");
        }
    });

    // attention -----------------------------------------------------------
    auto* attn_cmd = app.add_subcommand("attention", "compute cross-attention maps");
    CommonFlags attn_flags;
    std::string attn_t, attn_h, attn_wq, attn_wk, attn_wv, attn_annotation;
    attn_cmd->add_option("--embeddings", attn_t, "token embeddings (EMBX)")->required();
    attn_cmd->add_option("--latents", attn_h, "latents (EMBX)")->required();
    attn_cmd->add_option("--wq", attn_wq, "query projection (EMBX)")->required();
    attn_cmd->add_option("--wk", attn_wk, "key projection (EMBX)")->required();
    attn_cmd->add_option("--wv", attn_wv, "value projection (EMBX)")->required();
    attn_cmd->add_option("--annotation", attn_annotation, "annotation JSON (optional)");
    add_common(attn_cmd, attn_flags);
    attn_cmd->callback([&] {
        const Matrix t = read_embx_file(attn_t).matrix;
        const Matrix h = read_embx_file(attn_h).matrix;
        const ProjectionWeights w = load_weights(attn_wq, attn_wk, attn_wv);
        const AttentionState st = cross_attention_maps(h, t, w);
        nlohmann::json j;
        j["entropies"] = nlohmann::json::array();
        for (std::size_t k = 0; k < st.a.cols(); ++k)
            j["entropies"].push_back(
                {{"token", k}, {"value", shannon_entropy(token_distribution(st, k))}});
        if (!attn_annotation.empty()) {
            const PromptAnnotation ann = load_annotation(read_text(attn_annotation));
            if (ann.token_count != t.rows())
                fail(Errc::SizeMismatch, "attention: annotation token_count vs embeddings");
            nlohmann::json pairs = nlohmann::json::array();
            for (auto [m, n] : inter_np_pairs(ann))
                pairs.push_back({{"m", m},
                                 {"n", n},
                                 {"value", bhattacharyya_coeff(token_distribution(st, m),
                                                               token_distribution(st, n))}});
            j["bc_pairs"] = pairs;
        }
        if (attn_flags.out_dir.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            const fs::path out = ensure_out(attn_flags.out_dir);
            write_embx_file((out / "p.embx").string(), st.p);
            write_embx_file((out / "a.embx").string(), st.a);
            write_text(out / "summary.json", j.dump(2) + "\n");
        }
    });

    // optimize -------------------------------------------------------------
    auto* opt_cmd = app.add_subcommand("optimize", "run the full binding pipeline");
    CommonFlags opt_flags;
    std::string opt_t, opt_h, opt_wq, opt_wk, opt_wv, opt_annotation, opt_prompt;
    opt_cmd->add_option("--embeddings", opt_t, "token embeddings (EMBX)")->required();
    opt_cmd->add_option("--latents", opt_h, "latents (EMBX)")->required();
    opt_cmd->add_option("--wq", opt_wq, "query projection (EMBX)")->required();
    opt_cmd->add_option("--wk", opt_wk, "key projection (EMBX)")->required();
    opt_cmd->add_option("--wv", opt_wv, "value projection (EMBX)")->required();
    opt_cmd->add_option("--annotation", opt_annotation, "annotation JSON");
    opt_cmd->add_option("--prompt", opt_prompt, "template prompt (alternative to --annotation)");
    add_common(opt_cmd, opt_flags);
    opt_cmd->callback([&] {
        if (opt_flags.out_dir.empty())
            fail(Errc::ParseError, "optimize: --out directory is required");
        if (opt_annotation.empty() == opt_prompt.empty())
            fail(Errc::ParseError, "optimize: exactly one of --annotation/--prompt required");
        PipelineInputs in;
        in.t = read_embx_file(opt_t).matrix;
        in.h = read_embx_file(opt_h).matrix;
        in.w = load_weights(opt_wq, opt_wk, opt_wv);
        in.annotation = opt_annotation.empty()
                            ? parse_template_prompt(split_words(opt_prompt), Lexicon::basic())
                            : load_annotation(read_text(opt_annotation));
        const BindingConfig config = resolve_config(opt_flags);
        const PipelineResult res = run_pipeline(in, config);
        const fs::path out = ensure_out(opt_flags.out_dir);
        write_embx_file((out / "tokens.embx").string(), res.tokens);
        write_embx_file((out / "latents.embx").string(), res.latents);
        write_text(out / "report.json", report_to_string(res.report));
    });

    // report ---------------------------------------------------------------
    auto* rep_cmd = app.add_subcommand("report", "geometry deltas between two embedding files");
    CommonFlags rep_flags;
    std::string rep_before, rep_after, rep_annotation;
    rep_cmd->add_option("--before", rep_before, "embeddings before (EMBX)")->required();
    rep_cmd->add_option("--after", rep_after, "embeddings after (EMBX)")->required();
    rep_cmd->add_option("--annotation", rep_annotation, "annotation JSON")->required();
    add_common(rep_cmd, rep_flags);
    rep_cmd->callback([&] {
        const Matrix before = read_embx_file(rep_before).matrix;
        const Matrix after = read_embx_file(rep_after).matrix;
        const PromptAnnotation ann = load_annotation(read_text(rep_annotation));
        const GeometryReport rep = geometry_report(before, after, ann);
        BindingReport shell; // reuse the snapshot serializers
        nlohmann::json j;
        shell.geometry = rep;
        const nlohmann::json full = report_to_json(shell);
        j["geometry_before"] = full.at("geometry_before");
        j["geometry_after"] = full.at("geometry_after");
        j["deltas"] = full.at("deltas");
        emit(rep_flags, "geometry.json", j.dump(2) + "\n");
    });

    // verify -----------------------------------------------------------------
    auto* verify_cmd = app.add_subcommand("verify", "run a verification suite");
    verify_cmd->require_subcommand(1);
    CommonFlags verify_flags;
    std::size_t verify_trials = 0;
    std::size_t remark_dim = 64, remark_samples = 100000;
    std::string assume_embeddings, assume_annotation;

    auto run_suite = [&rc](const CommonFlags& flags, const std::string& name,
                           const VerifyOutcome& outcome) {
        std::cout << outcome.report.dump(2) << "\n";
        if (!flags.out_dir.empty())
            write_text(ensure_out(flags.out_dir) / ("verify_" + name + ".json"),
                       outcome.report.dump(2) + "\n");
        if (!outcome.pass) rc = 3;
    };

    auto* vp1 = verify_cmd->add_subcommand("prop1", "KL monotonicity + quadratic form");
    add_common(vp1, verify_flags);
    vp1->add_option("--trials", verify_trials, "trial count");
    double quad_tol = 0.05;
    vp1->add_option("--quad-tol", quad_tol, "relative tolerance for the quadratic-form match");
    vp1->callback([&] {
        run_suite(verify_flags, "prop1",
                  verify_prop1(verify_trials ? verify_trials : 100,
                               verify_flags.seed_given ? verify_flags.seed : 1, quad_tol));
    });

    auto* vp2 = verify_cmd->add_subcommand("prop2", "scaling separation inequality");
    add_common(vp2, verify_flags);
    vp2->add_option("--trials", verify_trials, "trial count");
    vp2->callback([&] {
        run_suite(verify_flags, "prop2",
                  verify_prop2(verify_trials ? verify_trials : 100000,
                               verify_flags.seed_given ? verify_flags.seed : 2));
    });

    auto* vr1 = verify_cmd->add_subcommand("remark1", "norm growth under add/sub");
    add_common(vr1, verify_flags);
    vr1->add_option("--dim", remark_dim, "embedding dimension");
    vr1->add_option("--samples", remark_samples, "Monte Carlo samples");
    vr1->callback([&] {
        run_suite(verify_flags, "remark1",
                  verify_remark1(remark_dim, remark_samples,
                                 verify_flags.seed_given ? verify_flags.seed : 3));
    });

    auto* vas = verify_cmd->add_subcommand("assumptions", "embedding-regime statistics");
    add_common(vas, verify_flags);
    vas->add_option("--embeddings", assume_embeddings, "token embeddings (EMBX)");
    vas->add_option("--annotation", assume_annotation, "annotation JSON");
    vas->callback([&] {
        Matrix t;
        PromptAnnotation ann;
        if (assume_embeddings.empty() != assume_annotation.empty())
            fail(Errc::ParseError, "verify assumptions: need both --embeddings and --annotation");
        if (assume_embeddings.empty()) {
            SynthParams p;
            p.n_nps = 8; // more NPs -> more inter-NP pairs in the statistics
            const SynthInstance inst =
                gen_instance(p, verify_flags.seed_given ? verify_flags.seed : 6);
            t = inst.t;
            ann = inst.annotation;
        } else {
            t = read_embx_file(assume_embeddings).matrix;
            ann = load_annotation(read_text(assume_annotation));
        }
        run_suite(verify_flags, "assumptions", verify_assumptions(t, ann));
    });

    auto* vgr = verify_cmd->add_subcommand("gradients", "analytic vs finite differences");
    add_common(vgr, verify_flags);
    vgr->add_option("--trials", verify_trials, "trial count");
    vgr->callback([&] {
        run_suite(verify_flags, "gradients",
                  verify_gradients(verify_trials ? verify_trials : 50,
                                   verify_flags.seed_given ? verify_flags.seed : 4));
    });

    auto* vrw = verify_cmd->add_subcommand("reweight", "re-interpretation checks");
    add_common(vrw, verify_flags);
    vrw->callback([&] {
        run_suite(verify_flags, "reweight",
                  verify_reweight(verify_flags.seed_given ? verify_flags.seed : 5));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
        return e.numerical() ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
