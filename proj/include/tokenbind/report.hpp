#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokenbind/attention.hpp"
#include "tokenbind/capo.hpp"
#include "tokenbind/geometry.hpp"
#include "tokenbind/optim.hpp"
#include "tokenbind/prompt.hpp"

namespace tokenbind {

/// Pairwise geometry over inter-NP span tokens plus per-token norms over NP
/// tokens — the quantities whose median shifts the pipeline report tracks.
struct PairGeometry {
    std::size_t i = 0;
    std::size_t j = 0;
    double mse = 0.0;
    double angle = 0.0;
};

struct TokenNorm {
    std::size_t token = 0;
    double norm = 0.0;
};

struct GeometrySnapshot {
    std::vector<PairGeometry> pairs; // every (earlier-NP token, later-NP token) pair
    std::vector<TokenNorm> norms;    // every NP-span token
    double median_mse = 0.0;
    double median_norm = 0.0;
    double median_angle = 0.0;
};

inline GeometrySnapshot compute_geometry(const Matrix& t, const PromptAnnotation& annotation) {
    annotation.validate();
    if (annotation.token_count != t.rows())
        fail(Errc::ShapeMismatch, "compute_geometry: annotation vs embedding rows");
    GeometrySnapshot snap;
    for (std::size_t a = 0; a < annotation.nps.size(); ++a)
        for (std::size_t b = a + 1; b < annotation.nps.size(); ++b)
            for (std::size_t i = annotation.nps[a].span_begin; i < annotation.nps[a].span_end; ++i)
                for (std::size_t j = annotation.nps[b].span_begin; j < annotation.nps[b].span_end;
                     ++j)
                    snap.pairs.push_back(
                        {i, j, mse(t.row(i), t.row(j)), angle_between(t.row(i), t.row(j))});
    for (const auto& np : annotation.nps)
        for (std::size_t i = np.span_begin; i < np.span_end; ++i)
            snap.norms.push_back({i, norm2(t.row(i))});

    if (!snap.pairs.empty()) {
        std::vector<double> ms, as;
        for (const auto& p : snap.pairs) {
            ms.push_back(p.mse);
            as.push_back(p.angle);
        }
        snap.median_mse = median(ms);
        snap.median_angle = median(as);
    }
    if (!snap.norms.empty()) {
        std::vector<double> ns;
        for (const auto& n : snap.norms) ns.push_back(n.norm);
        snap.median_norm = median(ns);
    }
    return snap;
}

struct GeometryDeltas {
    std::vector<PairGeometry> pairs; // per-pair deltas (after - before)
    std::vector<TokenNorm> norms;
    double median_mse = 0.0;
    double median_norm = 0.0;
    double median_angle = 0.0;
    bool all_medians_increased = false;
};

struct GeometryReport {
    GeometrySnapshot before;
    GeometrySnapshot after;
    GeometryDeltas deltas;
};

inline GeometryReport geometry_report(const Matrix& before, const Matrix& after,
                                      const PromptAnnotation& annotation) {
    require_same_shape(before, after, "geometry_report");
    GeometryReport rep;
    rep.before = compute_geometry(before, annotation);
    rep.after = compute_geometry(after, annotation);
    for (std::size_t k = 0; k < rep.before.pairs.size(); ++k)
        rep.deltas.pairs.push_back({rep.before.pairs[k].i, rep.before.pairs[k].j,
                                    rep.after.pairs[k].mse - rep.before.pairs[k].mse,
                                    rep.after.pairs[k].angle - rep.before.pairs[k].angle});
    for (std::size_t k = 0; k < rep.before.norms.size(); ++k)
        rep.deltas.norms.push_back({rep.before.norms[k].token,
                                    rep.after.norms[k].norm - rep.before.norms[k].norm});
    rep.deltas.median_mse = rep.after.median_mse - rep.before.median_mse;
    rep.deltas.median_norm = rep.after.median_norm - rep.before.median_norm;
    rep.deltas.median_angle = rep.after.median_angle - rep.before.median_angle;
    rep.deltas.all_medians_increased = rep.deltas.median_mse > 0.0 &&
                                       rep.deltas.median_norm > 0.0 &&
                                       rep.deltas.median_angle > 0.0;
    return rep;
}

struct TokenEntropy {
    std::size_t token = 0;
    double value = 0.0;
};

struct PairOverlap {
    std::size_t m = 0;
    std::size_t n = 0;
    double value = 0.0;
};

struct AttentionSummary {
    std::vector<TokenEntropy> entropies; // one per object token
    std::vector<PairOverlap> bc_pairs;   // one per inter-NP object pair
};

inline AttentionSummary compute_attention_summary(const AttentionState& state,
                                                  const PromptAnnotation& annotation) {
    AttentionSummary s;
    for (const auto& np : annotation.nps)
        s.entropies.push_back(
            {np.object_index, shannon_entropy(token_distribution(state, np.object_index))});
    for (auto [m, n] : inter_np_pairs(annotation))
        s.bc_pairs.push_back({m, n, bhattacharyya_coeff(token_distribution(state, m),
                                                        token_distribution(state, n))});
    return s;
}

struct BindingReport {
    BindingConfig config;
    GeometryReport geometry;
    std::vector<LossBreakdown> loss_trace;
    AttentionSummary attention_before;
    AttentionSummary attention_after;
    std::vector<CapoEvent> events;
};

// ---- JSON (de)serialization -------------------------------------------------
// nlohmann::json keeps object keys sorted, so identical values serialize to
// identical bytes — reports are diffable in CI.

inline nlohmann::json config_to_json(const BindingConfig& c) {
    nlohmann::json j;
    j["lambda"] = c.lambda;
    j["eta"] = c.eta;
    j["steps"] = c.steps;
    j["clamp_bound"] = c.clamp_bound;
    j["causality"] = causality_name(c.causality);
    j["apply_capo"] = c.apply_capo;
    j["optimize_latents"] = c.optimize_latents;
    j["optimize_aux_tokens"] = c.optimize_aux_tokens;
    j["backtracking"] = c.backtracking;
    j["strict_complement"] = c.strict_complement;
    j["include_attributes"] = c.include_attributes;
    j["seed"] = c.seed;
    return j;
}

/// Keys mirror BindingConfig field names exactly; unknown keys are errors.
/// Missing keys fall back to defaults, with optimize_aux_tokens defaulting by
/// causality (on for causal, off for non-causal).
inline BindingConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(Errc::SchemaError, "config: top level must be an object");
    static const std::vector<std::string> known = {
        "lambda",          "eta",          "steps",
        "clamp_bound",     "causality",    "apply_capo",
        "optimize_latents", "optimize_aux_tokens", "backtracking",
        "strict_complement", "include_attributes",  "seed"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            fail(Errc::SchemaError, "config: unknown key '" + key + "'");

    CausalityMode mode = CausalityMode::Causal;
    if (j.contains("causality")) {
        const auto s = j.at("causality").get<std::string>();
        if (s == "causal")
            mode = CausalityMode::Causal;
        else if (s == "noncausal")
            mode = CausalityMode::NonCausal;
        else
            fail(Errc::SchemaError, "config: causality must be 'causal' or 'noncausal'");
    }
    BindingConfig c = BindingConfig::defaults(mode);
    try {
        if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
        if (j.contains("eta")) c.eta = j.at("eta").get<double>();
        if (j.contains("steps")) c.steps = j.at("steps").get<std::size_t>();
        if (j.contains("clamp_bound")) c.clamp_bound = j.at("clamp_bound").get<double>();
        if (j.contains("apply_capo")) c.apply_capo = j.at("apply_capo").get<bool>();
        if (j.contains("optimize_latents"))
            c.optimize_latents = j.at("optimize_latents").get<bool>();
        if (j.contains("optimize_aux_tokens"))
            c.optimize_aux_tokens = j.at("optimize_aux_tokens").get<bool>();
        if (j.contains("backtracking")) c.backtracking = j.at("backtracking").get<bool>();
        if (j.contains("strict_complement"))
            c.strict_complement = j.at("strict_complement").get<bool>();
        if (j.contains("include_attributes"))
            c.include_attributes = j.at("include_attributes").get<bool>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::SchemaError, std::string("config: bad field type: ") + e.what());
    }
    c.validate();
    return c;
}

inline BindingConfig load_config(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::SchemaError, std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

namespace detail {

inline nlohmann::json snapshot_to_json(const GeometrySnapshot& s) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : s.pairs)
        j["pairs"].push_back({{"i", p.i}, {"j", p.j}, {"mse", p.mse}, {"angle", p.angle}});
    j["norms"] = nlohmann::json::array();
    for (const auto& n : s.norms) j["norms"].push_back({{"token", n.token}, {"norm", n.norm}});
    j["median_mse"] = s.median_mse;
    j["median_norm"] = s.median_norm;
    j["median_angle"] = s.median_angle;
    return j;
}

inline GeometrySnapshot snapshot_from_json(const nlohmann::json& j) {
    GeometrySnapshot s;
    for (const auto& p : j.at("pairs"))
        s.pairs.push_back({p.at("i").get<std::size_t>(), p.at("j").get<std::size_t>(),
                           p.at("mse").get<double>(), p.at("angle").get<double>()});
    for (const auto& n : j.at("norms"))
        s.norms.push_back({n.at("token").get<std::size_t>(), n.at("norm").get<double>()});
    s.median_mse = j.at("median_mse").get<double>();
    s.median_norm = j.at("median_norm").get<double>();
    s.median_angle = j.at("median_angle").get<double>();
    return s;
}

inline nlohmann::json summary_to_json(const AttentionSummary& s) {
    nlohmann::json j;
    j["entropies"] = nlohmann::json::array();
    for (const auto& e : s.entropies)
        j["entropies"].push_back({{"token", e.token}, {"value", e.value}});
    j["bc_pairs"] = nlohmann::json::array();
    for (const auto& b : s.bc_pairs)
        j["bc_pairs"].push_back({{"m", b.m}, {"n", b.n}, {"value", b.value}});
    return j;
}

inline AttentionSummary summary_from_json(const nlohmann::json& j) {
    AttentionSummary s;
    for (const auto& e : j.at("entropies"))
        s.entropies.push_back({e.at("token").get<std::size_t>(), e.at("value").get<double>()});
    for (const auto& b : j.at("bc_pairs"))
        s.bc_pairs.push_back({b.at("m").get<std::size_t>(), b.at("n").get<std::size_t>(),
                              b.at("value").get<double>()});
    return s;
}

} // namespace detail

inline nlohmann::json report_to_json(const BindingReport& r) {
    nlohmann::json j;
    j["config"] = config_to_json(r.config);
    j["geometry_before"] = detail::snapshot_to_json(r.geometry.before);
    j["geometry_after"] = detail::snapshot_to_json(r.geometry.after);
    nlohmann::json jd;
    jd["pairs"] = nlohmann::json::array();
    for (const auto& p : r.geometry.deltas.pairs)
        jd["pairs"].push_back({{"i", p.i}, {"j", p.j}, {"mse", p.mse}, {"angle", p.angle}});
    jd["norms"] = nlohmann::json::array();
    for (const auto& n : r.geometry.deltas.norms)
        jd["norms"].push_back({{"token", n.token}, {"norm", n.norm}});
    jd["median_mse"] = r.geometry.deltas.median_mse;
    jd["median_norm"] = r.geometry.deltas.median_norm;
    jd["median_angle"] = r.geometry.deltas.median_angle;
    jd["all_medians_increased"] = r.geometry.deltas.all_medians_increased;
    j["deltas"] = jd;
    j["loss_trace"] = nlohmann::json::array();
    for (const auto& l : r.loss_trace)
        j["loss_trace"].push_back({{"ent", l.ent}, {"bhat", l.bhat}, {"total", l.total}});
    j["attention_summary"] = {{"before", detail::summary_to_json(r.attention_before)},
                              {"after", detail::summary_to_json(r.attention_after)}};
    j["events"] = nlohmann::json::array();
    for (const auto& e : r.events)
        j["events"].push_back({{"np", e.np_index}, {"token", e.token_index}, {"what", e.what}});
    return j;
}

inline BindingReport report_from_json(const nlohmann::json& j) {
    BindingReport r;
    try {
        r.config = config_from_json(j.at("config"));
        r.geometry.before = detail::snapshot_from_json(j.at("geometry_before"));
        r.geometry.after = detail::snapshot_from_json(j.at("geometry_after"));
        const auto& jd = j.at("deltas");
        for (const auto& p : jd.at("pairs"))
            r.geometry.deltas.pairs.push_back({p.at("i").get<std::size_t>(),
                                               p.at("j").get<std::size_t>(),
                                               p.at("mse").get<double>(),
                                               p.at("angle").get<double>()});
        for (const auto& n : jd.at("norms"))
            r.geometry.deltas.norms.push_back(
                {n.at("token").get<std::size_t>(), n.at("norm").get<double>()});
        r.geometry.deltas.median_mse = jd.at("median_mse").get<double>();
        r.geometry.deltas.median_norm = jd.at("median_norm").get<double>();
        r.geometry.deltas.median_angle = jd.at("median_angle").get<double>();
        r.geometry.deltas.all_medians_increased = jd.at("all_medians_increased").get<bool>();
        for (const auto& l : j.at("loss_trace"))
            r.loss_trace.push_back({l.at("ent").get<double>(), l.at("bhat").get<double>(),
                                    l.at("total").get<double>()});
        r.attention_before = detail::summary_from_json(j.at("attention_summary").at("before"));
        r.attention_after = detail::summary_from_json(j.at("attention_summary").at("after"));
        for (const auto& e : j.at("events"))
            r.events.push_back({e.at("np").get<std::size_t>(), e.at("token").get<std::size_t>(),
                                e.at("what").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::SchemaError, std::string("report: bad document: ") + e.what());
    }
    return r;
}

inline std::string report_to_string(const BindingReport& r) {
    return report_to_json(r).dump(2) + "\n";
}

} // namespace tokenbind
