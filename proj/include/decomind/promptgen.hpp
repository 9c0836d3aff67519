#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "decomind/catalog.hpp"
#include "decomind/model.hpp"

namespace decomind {

struct PromptBundle {
    std::string positive;
    std::string negative;
    std::map<std::string, std::string> metadata;  // request_hash, selection_hash, template_version

    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

inline void to_json(json& j, const PromptBundle& p) {
    j = json{{"positive", p.positive}, {"negative", p.negative}, {"metadata", p.metadata}};
}
inline void from_json(const json& j, PromptBundle& p) {
    j.at("positive").get_to(p.positive);
    j.at("negative").get_to(p.negative);
    j.at("metadata").get_to(p.metadata);
}

inline constexpr const char* kPromptTemplateV1 = "v1";
inline constexpr const char* kCurrentPromptTemplate = kPromptTemplateV1;
inline constexpr const char* kDefaultNegativePrompt = "blurry, distorted geometry, extra walls, watermark, text";
inline constexpr const char* kCorrectionClause =
    "imagine and correct the viewing angles of the furniture; feel free to add more items to complete the design";

/// Shortest decimal form with at most two fractional digits ("4", "3.5").
inline std::string format_meters(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << std::round(v * 100.0) / 100.0;
    std::string s = os.str();
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

namespace detail {

inline std::string render_positive_v1(const DesignRequest& r) {
    std::string categories;
    for (const auto& c : r.furniture_categories) {
        if (!categories.empty()) categories += ", ";
        categories += spaced_label(c);
    }
    return "a photorealistic " + spaced_label(r.style) + " " + spaced_label(r.room_type) + " interior, " +
           format_meters(r.room_width_m) + "m by " + format_meters(r.room_depth_m) + "m, containing " + categories +
           ", furniture from " + r.store + "; " + kCorrectionClause;
}

inline bool mentions_label(const std::string& term, const DesignRequest& r) {
    const auto t = spaced_label(term);
    auto hit = [&](const std::string& label) {
        const auto l = spaced_label(label);
        return !l.empty() && t.find(l) != std::string::npos;
    };
    if (hit(r.room_type) || hit(r.style)) return true;
    for (const auto& c : r.furniture_categories) {
        if (hit(c)) return true;
    }
    return false;
}

}  // namespace detail

/// Builds the positive/negative prompt pair. Negative-prompt terms that
/// mention any request label are dropped so the negative never fights the
/// request.
inline PromptBundle build_prompt(const DesignRequest& request, const FurnitureSelection& selection,
                                 const std::string& negative = kDefaultNegativePrompt,
                                 const std::string& template_version = kCurrentPromptTemplate, Warnings* warnings = nullptr) {
    PromptBundle b;
    if (template_version == kPromptTemplateV1) {
        b.positive = detail::render_positive_v1(request);
    } else {
        throw ConfigurationError("unknown prompt template version '" + template_version + "'");
    }

    std::string neg;
    std::istringstream terms(negative);
    for (std::string term; std::getline(terms, term, ',');) {
        const auto first = term.find_first_not_of(' ');
        if (first == std::string::npos) continue;
        term = term.substr(first, term.find_last_not_of(' ') - first + 1);
        if (detail::mentions_label(term, request)) {
            if (warnings) warnings->push_back("negative prompt term '" + term + "' names a request label, dropped");
            continue;
        }
        if (!neg.empty()) neg += ", ";
        neg += term;
    }
    b.negative = neg;

    if (selection.all_empty() && warnings) {
        warnings->push_back("no catalog furniture selected; prompt lists requested categories only");
    }
    b.metadata["template_version"] = template_version;
    b.metadata["request_hash"] = content_hash(request);
    b.metadata["selection_hash"] = content_hash(selection);
    return b;
}

}  // namespace decomind
