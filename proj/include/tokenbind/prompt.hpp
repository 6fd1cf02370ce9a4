#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokenbind/error.hpp"

namespace tokenbind {

/// Contiguous token index range [begin, end), attribute indices, and the head
/// noun ("object") index the losses key on.
struct NounPhrase {
    std::size_t span_begin = 0;
    std::size_t span_end = 0; // exclusive
    std::size_t object_index = 0;
    std::vector<std::size_t> attribute_indices;

    std::size_t size() const { return span_end - span_begin; }
    bool contains(std::size_t i) const { return i >= span_begin && i < span_end; }
    bool operator==(const NounPhrase&) const = default;
};

struct PromptAnnotation {
    std::size_t token_count = 0;
    std::vector<NounPhrase> nps;
    std::optional<std::size_t> eot_index;
    std::vector<std::size_t> pad_indices;

    bool operator==(const PromptAnnotation&) const = default;

    bool inside_any_np(std::size_t i) const {
        for (const auto& np : nps)
            if (np.contains(i)) return true;
        return false;
    }

    void validate() const {
        for (std::size_t n = 0; n < nps.size(); ++n) {
            const auto& np = nps[n];
            if (np.span_begin >= np.span_end || np.span_end > token_count)
                fail(Errc::IndexError, "annotation: NP " + std::to_string(n) +
                                           " span out of range");
            if (!np.contains(np.object_index))
                fail(Errc::IndexError, "annotation: NP " + std::to_string(n) +
                                           " object index outside its span");
            for (std::size_t a : np.attribute_indices) {
                if (!np.contains(a))
                    fail(Errc::IndexError, "annotation: NP " + std::to_string(n) +
                                               " attribute index outside its span");
                if (a == np.object_index)
                    fail(Errc::IndexError, "annotation: NP " + std::to_string(n) +
                                               " attribute coincides with object index");
            }
            for (std::size_t m = n + 1; m < nps.size(); ++m)
                if (np.span_begin < nps[m].span_end && nps[m].span_begin < np.span_end)
                    fail(Errc::OverlapError, "annotation: NP spans " + std::to_string(n) +
                                                 " and " + std::to_string(m) + " overlap");
        }
        if (eot_index) {
            if (*eot_index >= token_count)
                fail(Errc::IndexError, "annotation: eot_index out of range");
            if (inside_any_np(*eot_index))
                fail(Errc::IndexError, "annotation: eot_index inside an NP span");
        }
        for (std::size_t p : pad_indices) {
            if (p >= token_count)
                fail(Errc::IndexError, "annotation: pad index out of range");
            if (inside_any_np(p))
                fail(Errc::IndexError, "annotation: pad index inside an NP span");
        }
    }
};

/// All unordered pairs of object indices from distinct NPs — the set S of the
/// separation loss. Stored with the smaller index first.
inline std::vector<std::pair<std::size_t, std::size_t>>
inter_np_pairs(const PromptAnnotation& annotation) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < annotation.nps.size(); ++i)
        for (std::size_t j = i + 1; j < annotation.nps.size(); ++j) {
            std::size_t a = annotation.nps[i].object_index;
            std::size_t b = annotation.nps[j].object_index;
            pairs.emplace_back(std::min(a, b), std::max(a, b));
        }
    return pairs;
}

/// Word sets the template parser classifies against.
struct Lexicon {
    std::set<std::string> adjectives;
    std::set<std::string> nouns;

    static Lexicon basic() {
        return Lexicon{
            {"red", "blue", "green", "yellow", "black", "white", "purple", "orange",
             "big", "small", "furry", "spotted", "striped", "shiny", "wooden", "metal"},
            {"cat", "dog", "apple", "bowl", "car", "ball", "crown", "suitcase", "chair",
             "table", "bench", "clock", "backpack", "balloon", "bird", "horse"}};
    }
};

namespace detail {

[[noreturn]] inline void parse_fail(std::size_t pos, const std::string& what) {
    fail(Errc::ParseError, "parse error at token " + std::to_string(pos) + ": " + what);
}

} // namespace detail

/// Parses the benchmark template grammar:
///   prompt := ["a" "photo" "of"] np ("and" np)*
///   np     := ("a"|"an") adjective* noun
/// Articles and "and" stay outside the NP spans; the head noun is the last
/// word of each NP. Any deviation raises ParseError at the offending token.
inline PromptAnnotation parse_template_prompt(const std::vector<std::string>& tokens,
                                              const Lexicon& lexicon) {
    if (tokens.empty()) detail::parse_fail(0, "empty prompt");

    PromptAnnotation ann;
    ann.token_count = tokens.size();

    std::size_t pos = 0;
    if (tokens.size() >= 3 && tokens[0] == "a" && tokens[1] == "photo" && tokens[2] == "of")
        pos = 3;

    auto parse_np = [&]() {
        if (pos >= tokens.size()) detail::parse_fail(pos, "expected article, got end of prompt");
        if (tokens[pos] != "a" && tokens[pos] != "an")
            detail::parse_fail(pos, "expected article 'a' or 'an', got '" + tokens[pos] + "'");
        ++pos;

        NounPhrase np;
        np.span_begin = pos;
        while (pos < tokens.size() && lexicon.adjectives.count(tokens[pos])) {
            np.attribute_indices.push_back(pos);
            ++pos;
        }
        if (pos >= tokens.size())
            detail::parse_fail(pos, "expected noun, got end of prompt");
        if (!lexicon.nouns.count(tokens[pos]))
            detail::parse_fail(pos, "expected noun, got '" + tokens[pos] + "'");
        np.object_index = pos;
        ++pos;
        np.span_end = pos;
        ann.nps.push_back(std::move(np));
    };

    parse_np();
    while (pos < tokens.size()) {
        if (tokens[pos] != "and")
            detail::parse_fail(pos, "expected 'and', got '" + tokens[pos] + "'");
        ++pos;
        parse_np();
    }

    ann.validate();
    return ann;
}

/// Whitespace word splitter for CLI convenience.
inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ') ++j;
        if (j > i) words.push_back(text.substr(i, j - i));
        i = j;
    }
    return words;
}

inline nlohmann::json annotation_to_json(const PromptAnnotation& ann) {
    nlohmann::json j;
    j["token_count"] = ann.token_count;
    j["nps"] = nlohmann::json::array();
    for (const auto& np : ann.nps) {
        nlohmann::json jn;
        jn["span"] = {np.span_begin, np.span_end};
        jn["object_index"] = np.object_index;
        jn["attribute_indices"] = np.attribute_indices;
        j["nps"].push_back(jn);
    }
    if (ann.eot_index)
        j["eot_index"] = *ann.eot_index;
    else
        j["eot_index"] = nullptr;
    j["pad_indices"] = ann.pad_indices;
    return j;
}

/// Loads and fully validates the annotation JSON schema:
/// { "token_count": int, "nps": [ { "span": [start, end_exclusive],
///   "object_index": int, "attribute_indices": [int...] } ],
///   "eot_index": int|null, "pad_indices": [int...] }
inline PromptAnnotation load_annotation(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::SchemaError, std::string("annotation: invalid JSON: ") + e.what());
    }

    auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        if (!obj.contains(key))
            fail(Errc::SchemaError, std::string("annotation: missing key '") + key + "'");
        return obj.at(key);
    };
    auto as_index = [&](const nlohmann::json& v, const char* what) -> std::size_t {
        if (!v.is_number_integer() || v.get<long long>() < 0)
            fail(Errc::SchemaError,
                 std::string("annotation: ") + what + " must be a non-negative integer");
        return v.get<std::size_t>();
    };

    if (!j.is_object()) fail(Errc::SchemaError, "annotation: top level must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "token_count" && key != "nps" && key != "eot_index" && key != "pad_indices")
            fail(Errc::SchemaError, "annotation: unknown key '" + key + "'");

    PromptAnnotation ann;
    ann.token_count = as_index(require(j, "token_count"), "token_count");

    const auto& jnps = require(j, "nps");
    if (!jnps.is_array()) fail(Errc::SchemaError, "annotation: 'nps' must be an array");
    for (const auto& jn : jnps) {
        if (!jn.is_object()) fail(Errc::SchemaError, "annotation: NP entries must be objects");
        for (const auto& [key, _] : jn.items())
            if (key != "span" && key != "object_index" && key != "attribute_indices")
                fail(Errc::SchemaError, "annotation: unknown NP key '" + key + "'");
        NounPhrase np;
        const auto& span = require(jn, "span");
        if (!span.is_array() || span.size() != 2)
            fail(Errc::SchemaError, "annotation: 'span' must be [start, end_exclusive]");
        np.span_begin = as_index(span[0], "span start");
        np.span_end = as_index(span[1], "span end");
        np.object_index = as_index(require(jn, "object_index"), "object_index");
        const auto& attrs = require(jn, "attribute_indices");
        if (!attrs.is_array())
            fail(Errc::SchemaError, "annotation: 'attribute_indices' must be an array");
        for (const auto& a : attrs)
            np.attribute_indices.push_back(as_index(a, "attribute index"));
        ann.nps.push_back(std::move(np));
    }

    const auto& jeot = require(j, "eot_index");
    if (!jeot.is_null()) ann.eot_index = as_index(jeot, "eot_index");
    const auto& jpad = require(j, "pad_indices");
    if (!jpad.is_array()) fail(Errc::SchemaError, "annotation: 'pad_indices' must be an array");
    for (const auto& p : jpad) ann.pad_indices.push_back(as_index(p, "pad index"));

    ann.validate();
    return ann;
}

inline std::string save_annotation(const PromptAnnotation& ann) {
    return annotation_to_json(ann).dump(2) + "\n";
}

} // namespace tokenbind
