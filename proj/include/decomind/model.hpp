#pragma once

// Shared domain vocabulary. No I/O and no model calls live here; every
// type is a plain value that serializes to the snake_case JSON wire format
// used by the service and the browser UI.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "decomind/errors.hpp"
#include "decomind/hash.hpp"

namespace decomind {

using json = nlohmann::json;

enum class OpeningKind { door, window };
enum class Wall { north, east, south, west };
enum class SourceSplit { train, validation, test };
enum class ExclusionReason { none, scene_image, low_quality };

NLOHMANN_JSON_SERIALIZE_ENUM(OpeningKind, {{OpeningKind::door, "door"}, {OpeningKind::window, "window"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Wall, {{Wall::north, "north"}, {Wall::east, "east"}, {Wall::south, "south"}, {Wall::west, "west"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SourceSplit,
                             {{SourceSplit::train, "train"}, {SourceSplit::validation, "validation"}, {SourceSplit::test, "test"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ExclusionReason, {{ExclusionReason::none, "none"},
                                               {ExclusionReason::scene_image, "scene_image"},
                                               {ExclusionReason::low_quality, "low_quality"}})

/// Walls in counter-clockwise traversal order of the room-interior frame
/// (origin at the north-west corner, x towards east, y towards south).
inline constexpr Wall kWallsCcw[] = {Wall::north, Wall::east, Wall::south, Wall::west};

inline std::string to_string(Wall w) { return json(w).get<std::string>(); }
inline std::string to_string(OpeningKind k) { return json(k).get<std::string>(); }

inline constexpr double kMinDoorWidth = 0.6;
inline constexpr double kMinWindowWidth = 0.3;
inline constexpr double kGeomEps = 1e-9;

/// Lowercases and folds spaces and hyphens to underscores.
inline std::string normalize_label(std::string_view label) {
    const auto first = label.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    label = label.substr(first, label.find_last_not_of(" \t") - first + 1);
    std::string out;
    out.reserve(label.size());
    for (char ch : label) {
        const auto c = static_cast<unsigned char>(ch);
        if (c == ' ' || c == '-') {
            out.push_back('_');
        } else {
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

/// "dining_table" -> "dining table".
inline std::string spaced_label(std::string_view label) {
    std::string out = normalize_label(label);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

inline bool labels_equal(std::string_view a, std::string_view b) { return normalize_label(a) == normalize_label(b); }

struct LabelConfig {
    std::vector<std::string> room_types{"bedroom", "living_room", "kitchen", "dining_room"};
    std::vector<std::string> styles{"modern", "classic", "minimalist"};

    static bool contains(const std::vector<std::string>& set, std::string_view label) {
        return std::any_of(set.begin(), set.end(), [&](const std::string& s) { return labels_equal(s, label); });
    }
    bool has_room_type(std::string_view l) const { return contains(room_types, l); }
    bool has_style(std::string_view l) const { return contains(styles, l); }

    friend bool operator==(const LabelConfig&, const LabelConfig&) = default;
};

inline void to_json(json& j, const LabelConfig& l) { j = json{{"room_types", l.room_types}, {"styles", l.styles}}; }
inline void from_json(const json& j, LabelConfig& l) {
    if (j.contains("room_types")) j.at("room_types").get_to(l.room_types);
    if (j.contains("styles")) j.at("styles").get_to(l.styles);
}

struct Opening {
    OpeningKind kind = OpeningKind::door;
    Wall wall = Wall::north;
    double offset_m = 0.0;  // from the wall's counter-clockwise start corner
    double width_m = 0.0;

    friend bool operator==(const Opening&, const Opening&) = default;
};

inline void to_json(json& j, const Opening& o) {
    j = json{{"kind", o.kind}, {"wall", o.wall}, {"offset_m", o.offset_m}, {"width_m", o.width_m}};
}
inline void from_json(const json& j, Opening& o) {
    j.at("kind").get_to(o.kind);
    j.at("wall").get_to(o.wall);
    j.at("offset_m").get_to(o.offset_m);
    j.at("width_m").get_to(o.width_m);
}

struct DesignRequest {
    std::string room_type;
    std::string style;
    double room_width_m = 0.0;  // west-east extent
    double room_depth_m = 0.0;  // north-south extent
    std::vector<Opening> openings;
    std::vector<std::string> furniture_categories;
    std::string store = "ikea";
    std::optional<std::uint64_t> seed;
    int items_per_category = 1;

    friend bool operator==(const DesignRequest&, const DesignRequest&) = default;
};

inline void to_json(json& j, const DesignRequest& r) {
    j = json{{"room_type", r.room_type},
             {"style", r.style},
             {"room_width_m", r.room_width_m},
             {"room_depth_m", r.room_depth_m},
             {"openings", r.openings},
             {"furniture_categories", r.furniture_categories},
             {"store", r.store},
             {"seed", r.seed ? json(*r.seed) : json(nullptr)},
             {"items_per_category", r.items_per_category}};
}

inline double wall_length(const DesignRequest& r, Wall w) {
    return (w == Wall::north || w == Wall::south) ? r.room_width_m : r.room_depth_m;
}

struct ValidationIssue {
    std::string field;
    std::string message;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const noexcept { return issues.empty(); }
    bool names(std::string_view field) const {
        return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.field == field; });
    }
    void add(std::string field, std::string message) { issues.push_back({std::move(field), std::move(message)}); }
    std::string summary() const {
        std::string s;
        for (const auto& i : issues) {
            if (!s.empty()) s += "; ";
            s += i.field + ": " + i.message;
        }
        return s;
    }
};

inline void to_json(json& j, const ValidationIssue& i) { j = json{{"field", i.field}, {"message", i.message}}; }
inline void to_json(json& j, const ValidationReport& r) { j = json{{"issues", r.issues}}; }

using ValidationResult = std::variant<DesignRequest, ValidationReport>;

/// Checks every DesignRequest invariant and reports all violations at once.
/// A valid request is returned untouched (no normalization).
inline ValidationResult validate_request(const DesignRequest& r, const LabelConfig& labels = {}) {
    ValidationReport report;
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };

    if (!positive(r.room_width_m)) report.add("room_width_m", "must be a positive number of meters");
    if (!positive(r.room_depth_m)) report.add("room_depth_m", "must be a positive number of meters");
    if (!labels.has_room_type(r.room_type)) report.add("room_type", "unknown room type '" + r.room_type + "'");
    if (!labels.has_style(r.style)) report.add("style", "unknown style '" + r.style + "'");
    if (r.store.empty()) report.add("store", "must name a catalog");
    if (r.items_per_category < 1) report.add("items_per_category", "must be a positive integer");

    if (r.furniture_categories.empty()) {
        report.add("furniture_categories", "at least one furniture category is required");
    } else {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < r.furniture_categories.size(); ++i) {
            const auto norm = normalize_label(r.furniture_categories[i]);
            const std::string field = "furniture_categories[" + std::to_string(i) + "]";
            if (norm.empty()) {
                report.add(field, "empty category label");
            } else if (!seen.insert(norm).second) {
                report.add(field, "duplicate category '" + r.furniture_categories[i] + "'");
            }
        }
    }

    for (std::size_t i = 0; i < r.openings.size(); ++i) {
        const auto& o = r.openings[i];
        const std::string field = "openings[" + std::to_string(i) + "]";
        const double floor = o.kind == OpeningKind::door ? kMinDoorWidth : kMinWindowWidth;
        if (!std::isfinite(o.offset_m) || !std::isfinite(o.width_m)) {
            report.add(field, "offset and width must be finite");
            continue;
        }
        if (o.width_m < floor) {
            report.add(field, to_string(o.kind) + " width " + json(o.width_m).dump() + " m is below the " +
                                  json(floor).dump() + " m minimum");
        }
        if (o.offset_m < 0.0) report.add(field, "offset must be non-negative");
        const double len = wall_length(r, o.wall);
        if (positive(len) && o.offset_m + o.width_m > len + kGeomEps) {
            report.add(field, "extends past the end of the " + to_string(o.wall) + " wall (" +
                                  json(o.offset_m + o.width_m).dump() + " > " + json(len).dump() + ")");
        }
    }

    if (!report.ok()) return report;
    return r;
}

/// Shape-only decoding: type and presence problems are added to `report`
/// per field; invariants are not checked.
inline DesignRequest decode_request(const json& j, ValidationReport& report) {
    DesignRequest r;
    if (!j.is_object()) {
        report.add("request", "must be a JSON object");
        return r;
    }
    auto field = [&](const char* name, auto& dst, bool required) {
        if (!j.contains(name) || j.at(name).is_null()) {
            if (required) report.add(name, "is required");
            return;
        }
        try {
            j.at(name).get_to(dst);
        } catch (const json::exception& e) {
            report.add(name, std::string("has the wrong type: ") + e.what());
        }
    };
    field("room_type", r.room_type, true);
    field("style", r.style, true);
    field("room_width_m", r.room_width_m, true);
    field("room_depth_m", r.room_depth_m, true);
    field("furniture_categories", r.furniture_categories, true);
    field("store", r.store, false);
    field("items_per_category", r.items_per_category, false);
    if (j.contains("seed") && !j.at("seed").is_null()) {
        if (j.at("seed").is_number_unsigned()) {
            r.seed = j.at("seed").get<std::uint64_t>();
        } else {
            report.add("seed", "must be a non-negative integer");
        }
    }
    if (j.contains("openings") && !j.at("openings").is_null()) {
        if (!j.at("openings").is_array()) {
            report.add("openings", "must be a list");
        } else {
            const auto& arr = j.at("openings");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                try {
                    r.openings.push_back(arr[i].get<Opening>());
                } catch (const json::exception& e) {
                    report.add("openings[" + std::to_string(i) + "]", std::string("malformed opening: ") + e.what());
                }
            }
        }
    }
    return r;
}

/// Decodes a JSON request and applies validate_request; never throws.
inline ValidationResult parse_request(const json& j, const LabelConfig& labels = {}) {
    ValidationReport report;
    DesignRequest r = decode_request(j, report);
    if (!report.ok()) return report;
    return validate_request(r, labels);
}

inline void from_json(const json& j, DesignRequest& r) {
    ValidationReport report;
    r = decode_request(j, report);
    if (!report.ok()) throw RequestError("malformed design request: " + report.summary());
}

struct FurnitureAsset {
    std::string asset_id;
    std::string category;
    std::string image_path;  // relative to the catalog root, '/' separated
    bool has_alpha = false;
    SourceSplit source_split = SourceSplit::train;
    bool excluded = false;
    ExclusionReason exclusion_reason = ExclusionReason::none;

    void exclude(ExclusionReason why) {
        if (excluded) return;  // exclusion is monotone and keeps its first reason
        excluded = true;
        exclusion_reason = why;
    }

    friend bool operator==(const FurnitureAsset&, const FurnitureAsset&) = default;
};

inline void to_json(json& j, const FurnitureAsset& a) {
    j = json{{"asset_id", a.asset_id},   {"category", a.category},         {"image_path", a.image_path},
             {"has_alpha", a.has_alpha}, {"source_split", a.source_split}, {"excluded", a.excluded},
             {"exclusion_reason", a.exclusion_reason}};
}
inline void from_json(const json& j, FurnitureAsset& a) {
    j.at("asset_id").get_to(a.asset_id);
    j.at("category").get_to(a.category);
    j.at("image_path").get_to(a.image_path);
    j.at("has_alpha").get_to(a.has_alpha);
    j.at("source_split").get_to(a.source_split);
    j.at("excluded").get_to(a.excluded);
    j.at("exclusion_reason").get_to(a.exclusion_reason);
}

struct EmbeddingVector {
    std::vector<float> values;
    std::string provider_id;

    std::size_t dimension() const noexcept { return values.size(); }

    double norm() const {
        double s = 0.0;
        for (float v : values) s += static_cast<double>(v) * static_cast<double>(v);
        return std::sqrt(s);
    }

    /// Normalizes in double precision before narrowing to float.
    static EmbeddingVector unit(const std::vector<double>& raw, std::string provider_id) {
        double s = 0.0;
        for (double v : raw) s += v * v;
        const double n = std::sqrt(s);
        if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalize a zero or non-finite vector");
        EmbeddingVector e;
        e.provider_id = std::move(provider_id);
        e.values.reserve(raw.size());
        for (double v : raw) e.values.push_back(static_cast<float>(v / n));
        return e;
    }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline constexpr double kUnitNormTolerance = 1e-6;

inline bool is_unit(const EmbeddingVector& e) { return std::abs(e.norm() - 1.0) <= kUnitNormTolerance; }

inline void to_json(json& j, const EmbeddingVector& e) { j = json{{"values", e.values}, {"provider_id", e.provider_id}}; }
inline void from_json(const json& j, EmbeddingVector& e) {
    j.at("values").get_to(e.values);
    j.at("provider_id").get_to(e.provider_id);
}

/// Dot product accumulated in double, in index order.
inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size()) throw RankingError("embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    return s;
}

struct ScoredAsset {
    std::string asset_id;
    double similarity_score = 0.0;

    friend bool operator==(const ScoredAsset&, const ScoredAsset&) = default;
};

/// Similarity descending, ties by ascending asset_id. Total over distinct ids.
inline bool ranks_before(const ScoredAsset& a, const ScoredAsset& b) {
    if (a.similarity_score != b.similarity_score) return a.similarity_score > b.similarity_score;
    return a.asset_id < b.asset_id;
}

inline void to_json(json& j, const ScoredAsset& s) { j = json{{"asset_id", s.asset_id}, {"similarity_score", s.similarity_score}}; }
inline void from_json(const json& j, ScoredAsset& s) {
    j.at("asset_id").get_to(s.asset_id);
    j.at("similarity_score").get_to(s.similarity_score);
}

struct FurnitureSelection {
    std::map<std::string, std::vector<ScoredAsset>> picks;

    bool all_empty() const {
        return std::all_of(picks.begin(), picks.end(), [](const auto& kv) { return kv.second.empty(); });
    }

    friend bool operator==(const FurnitureSelection&, const FurnitureSelection&) = default;
};

inline void sort_picks(std::vector<ScoredAsset>& list) { std::sort(list.begin(), list.end(), ranks_before); }

inline void to_json(json& j, const FurnitureSelection& s) { j = json{{"picks", s.picks}}; }
inline void from_json(const json& j, FurnitureSelection& s) { j.at("picks").get_to(s.picks); }

struct EvaluationReport {
    std::string predicted_room_type;
    double room_type_confidence = 0.0;
    std::string predicted_style;
    double style_confidence = 0.0;
    bool room_type_match = false;
    bool style_match = false;
    double final_score = 0.0;
    // Full classifier outputs, kept for manual audit of misclassifications.
    std::map<std::string, double> room_type_distribution;
    std::map<std::string, double> style_distribution;

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// 0.5 per matched label. Exact in binary floating point.
constexpr double compute_final_score(bool room_type_match, bool style_match) noexcept {
    return 0.5 * (room_type_match ? 1.0 : 0.0) + 0.5 * (style_match ? 1.0 : 0.0);
}

inline void to_json(json& j, const EvaluationReport& r) {
    j = json{{"predicted_room_type", r.predicted_room_type},
             {"room_type_confidence", r.room_type_confidence},
             {"predicted_style", r.predicted_style},
             {"style_confidence", r.style_confidence},
             {"room_type_match", r.room_type_match},
             {"style_match", r.style_match},
             {"final_score", r.final_score},
             {"room_type_distribution", r.room_type_distribution},
             {"style_distribution", r.style_distribution}};
}
inline void from_json(const json& j, EvaluationReport& r) {
    j.at("predicted_room_type").get_to(r.predicted_room_type);
    j.at("room_type_confidence").get_to(r.room_type_confidence);
    j.at("predicted_style").get_to(r.predicted_style);
    j.at("style_confidence").get_to(r.style_confidence);
    j.at("room_type_match").get_to(r.room_type_match);
    j.at("style_match").get_to(r.style_match);
    j.at("final_score").get_to(r.final_score);
    if (j.contains("room_type_distribution")) j.at("room_type_distribution").get_to(r.room_type_distribution);
    if (j.contains("style_distribution")) j.at("style_distribution").get_to(r.style_distribution);
}

/// Stable text form used for content hashes (object keys are sorted).
template <class T>
std::string canonical_json(const T& value) {
    return json(value).dump();
}

template <class T>
std::string content_hash(const T& value) {
    return sha256_hex(canonical_json(value));
}

}  // namespace decomind
