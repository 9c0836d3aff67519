#pragma once

// Furniture placement and the top-down conditioning image.
//
// Room-interior frame: origin at the north-west corner, x grows east, y
// grows south, units are meters. Walls are traversed counter-clockwise in
// this frame (north from NW, east from NE, south from SE, west from SW),
// which is also the direction in which Opening::offset_m is measured.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decomind/bitmap_font.hpp"
#include "decomind/catalog.hpp"
#include "decomind/errors.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"

namespace decomind {

struct Footprint {
    double w_m = 1.0;  // along the anchoring wall
    double d_m = 1.0;  // away from the wall

    double area() const noexcept { return w_m * d_m; }
    friend bool operator==(const Footprint&, const Footprint&) = default;
};

inline void to_json(json& j, const Footprint& f) { j = json::array({f.w_m, f.d_m}); }
inline void from_json(const json& j, Footprint& f) {
    if (j.is_array()) {
        j.at(0).get_to(f.w_m);
        j.at(1).get_to(f.d_m);
    } else {
        j.at("w_m").get_to(f.w_m);
        j.at("d_m").get_to(f.d_m);
    }
}

inline constexpr Footprint kFallbackFootprint{1.0, 1.0};

class FootprintTable {
public:
    FootprintTable() = default;
    explicit FootprintTable(std::map<std::string, Footprint> entries) {
        for (auto& [k, v] : entries) entries_[normalize_label(k)] = v;
    }

    static FootprintTable defaults() {
        return FootprintTable({{"bed", {1.6, 2.0}},          {"sofa", {2.0, 0.9}},          {"table", {1.2, 0.8}},
                               {"wardrobe", {1.5, 0.6}},     {"chair", {0.5, 0.5}},         {"armchair", {0.8, 0.8}},
                               {"desk", {1.2, 0.6}},         {"dining_table", {1.6, 0.9}},  {"coffee_table", {1.0, 0.6}},
                               {"nightstand", {0.5, 0.4}},   {"bookshelf", {0.8, 0.35}},    {"dresser", {1.2, 0.5}},
                               {"tv_stand", {1.5, 0.4}},     {"cabinet", {1.0, 0.5}},       {"lamp", {0.4, 0.4}},
                               {"kitchen_island", {1.8, 0.9}}});
    }

    /// Entries in `overrides` replace or extend this table.
    FootprintTable merged(const std::map<std::string, Footprint>& overrides) const {
        FootprintTable t = *this;
        for (const auto& [k, v] : overrides) t.entries_[normalize_label(k)] = v;
        return t;
    }

    std::optional<Footprint> find(std::string_view category) const {
        auto it = entries_.find(normalize_label(category));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    const std::map<std::string, Footprint>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, Footprint> entries_;
};

inline Footprint default_footprint(std::string_view category, const FootprintTable& table = FootprintTable::defaults(),
                                   Warnings* warnings = nullptr) {
    if (auto f = table.find(category)) return *f;
    if (warnings) warnings->push_back("no footprint for category '" + std::string(category) + "', using 1.0x1.0 m");
    return kFallbackFootprint;
}

/// A placed footprint. w_m/d_m are the x/y extents in the room frame (for
/// east/west anchors the catalog footprint is rotated).
struct Placement {
    std::string asset_id;
    std::string category;
    double x_m = 0.0;
    double y_m = 0.0;
    double w_m = 0.0;
    double d_m = 0.0;
    std::optional<Wall> wall_anchor;

    double x1() const noexcept { return x_m + w_m; }
    double y1() const noexcept { return y_m + d_m; }

    friend bool operator==(const Placement&, const Placement&) = default;
};

inline void to_json(json& j, const Placement& p) {
    j = json{{"asset_id", p.asset_id}, {"category", p.category}, {"x_m", p.x_m}, {"y_m", p.y_m}, {"w_m", p.w_m},
             {"d_m", p.d_m},           {"wall_anchor", p.wall_anchor ? json(*p.wall_anchor) : json(nullptr)}};
}
inline void from_json(const json& j, Placement& p) {
    j.at("asset_id").get_to(p.asset_id);
    j.at("category").get_to(p.category);
    j.at("x_m").get_to(p.x_m);
    j.at("y_m").get_to(p.y_m);
    j.at("w_m").get_to(p.w_m);
    j.at("d_m").get_to(p.d_m);
    if (j.contains("wall_anchor") && !j.at("wall_anchor").is_null()) {
        p.wall_anchor = j.at("wall_anchor").get<Wall>();
    } else {
        p.wall_anchor.reset();
    }
}

struct UnplacedItem {
    std::string asset_id;
    std::string category;
    std::string reason;

    friend bool operator==(const UnplacedItem&, const UnplacedItem&) = default;
};

inline void to_json(json& j, const UnplacedItem& u) {
    j = json{{"asset_id", u.asset_id}, {"category", u.category}, {"reason", u.reason}};
}
inline void from_json(const json& j, UnplacedItem& u) {
    j.at("asset_id").get_to(u.asset_id);
    j.at("category").get_to(u.category);
    j.at("reason").get_to(u.reason);
}

struct PlacementReport {
    std::vector<Placement> placements;
    std::vector<UnplacedItem> unplaced;
    Warnings warnings;
};

inline void to_json(json& j, const PlacementReport& r) {
    j = json{{"placements", r.placements}, {"unplaced", r.unplaced}, {"warnings", r.warnings}};
}

inline constexpr double kOpeningClearance = 0.1;
inline constexpr double kInteriorGrid = 0.5;

/// Interiors intersect (shared edges do not count).
inline bool overlaps(const Placement& a, const Placement& b) {
    return std::min(a.x1(), b.x1()) - std::max(a.x_m, b.x_m) > kGeomEps &&
           std::min(a.y1(), b.y1()) - std::max(a.y_m, b.y_m) > kGeomEps;
}

namespace detail {

struct Interval {
    double lo, hi;
};

/// Opening extent in room-frame coordinates along its wall (x for
/// north/south walls, y for east/west walls).
inline Interval opening_span(const DesignRequest& r, const Opening& o) {
    switch (o.wall) {
        case Wall::north: return {o.offset_m, o.offset_m + o.width_m};
        case Wall::east: return {o.offset_m, o.offset_m + o.width_m};
        case Wall::south: return {r.room_width_m - o.offset_m - o.width_m, r.room_width_m - o.offset_m};
        case Wall::west: return {r.room_depth_m - o.offset_m - o.width_m, r.room_depth_m - o.offset_m};
    }
    return {0, 0};
}

inline bool touches_wall(const DesignRequest& r, const Placement& p, Wall w) {
    switch (w) {
        case Wall::north: return p.y_m <= kGeomEps;
        case Wall::east: return p.x1() >= r.room_width_m - kGeomEps;
        case Wall::south: return p.y1() >= r.room_depth_m - kGeomEps;
        case Wall::west: return p.x_m <= kGeomEps;
    }
    return false;
}

}  // namespace detail

/// True when the footprint rests against a wall inside an opening's
/// clearance zone.
inline bool blocks_opening(const DesignRequest& r, const Placement& p) {
    for (const auto& o : r.openings) {
        if (!detail::touches_wall(r, p, o.wall)) continue;
        const auto span = detail::opening_span(r, o);
        const bool horizontal = o.wall == Wall::north || o.wall == Wall::south;
        const double lo = horizontal ? p.x_m : p.y_m;
        const double hi = horizontal ? p.x1() : p.y1();
        if (std::min(hi, span.hi + kOpeningClearance) - std::max(lo, span.lo - kOpeningClearance) > kGeomEps) return true;
    }
    return false;
}

/// Every violated Placement invariant; empty when the set is valid.
inline std::vector<std::string> check_placements(const DesignRequest& r, const std::vector<Placement>& ps) {
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps[i];
        if (!(p.w_m > 0 && p.d_m > 0)) problems.push_back(p.asset_id + ": non-positive footprint");
        if (p.x_m < -kGeomEps || p.y_m < -kGeomEps || p.x1() > r.room_width_m + kGeomEps || p.y1() > r.room_depth_m + kGeomEps) {
            problems.push_back(p.asset_id + ": footprint leaves the room");
        }
        if (blocks_opening(r, p)) problems.push_back(p.asset_id + ": blocks an opening");
        for (std::size_t j = i + 1; j < ps.size(); ++j) {
            if (overlaps(p, ps[j])) problems.push_back(p.asset_id + " overlaps " + ps[j].asset_id);
        }
    }
    return problems;
}

namespace detail {

struct WallSegment {
    Wall wall;
    double start;
    double end;
    double cursor;
    std::size_t order;
};

inline std::vector<WallSegment> free_wall_segments(const DesignRequest& r) {
    std::vector<WallSegment> out;
    for (Wall w : kWallsCcw) {
        const double len = wall_length(r, w);
        std::vector<Interval> blocked;
        for (const auto& o : r.openings) {
            if (o.wall != w) continue;
            blocked.push_back({std::max(0.0, o.offset_m - kOpeningClearance), std::min(len, o.offset_m + o.width_m + kOpeningClearance)});
        }
        std::sort(blocked.begin(), blocked.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        double pos = 0.0;
        for (const auto& b : blocked) {
            if (b.lo - pos > kGeomEps) out.push_back({w, pos, b.lo, pos, out.size()});
            pos = std::max(pos, b.hi);
        }
        if (len - pos > kGeomEps) out.push_back({w, pos, len, pos, out.size()});
    }
    return out;
}

/// Footprint of an item whose near edge lies on `wall`, occupying
/// [pos, pos + along] in the wall's own counter-clockwise coordinate.
inline Placement wall_rect(const DesignRequest& r, Wall wall, double pos, const Footprint& f) {
    const double W = r.room_width_m, D = r.room_depth_m;
    Placement p;
    p.wall_anchor = wall;
    switch (wall) {
        case Wall::north: p.x_m = pos; p.y_m = 0.0; p.w_m = f.w_m; p.d_m = f.d_m; break;
        case Wall::east: p.x_m = W - f.d_m; p.y_m = pos; p.w_m = f.d_m; p.d_m = f.w_m; break;
        case Wall::south: p.x_m = W - pos - f.w_m; p.y_m = D - f.d_m; p.w_m = f.w_m; p.d_m = f.d_m; break;
        case Wall::west: p.x_m = 0.0; p.y_m = D - pos - f.w_m; p.w_m = f.d_m; p.d_m = f.w_m; break;
    }
    p.x_m = std::max(0.0, p.x_m);
    p.y_m = std::max(0.0, p.y_m);
    return p;
}

/// Far edge of `obstacle` measured in the wall's counter-clockwise coordinate.
inline double far_edge_along(const DesignRequest& r, Wall wall, const Placement& obstacle) {
    switch (wall) {
        case Wall::north: return obstacle.x1();
        case Wall::east: return obstacle.y1();
        case Wall::south: return r.room_width_m - obstacle.x_m;
        case Wall::west: return r.room_depth_m - obstacle.y_m;
    }
    return std::numeric_limits<double>::infinity();
}

struct Item {
    std::string asset_id;
    std::string category;
    Footprint footprint;
};

}  // namespace detail

/// Greedy wall-first placement.
///
/// Items go largest-area first. Each one tries the free wall segments
/// (walls minus openings widened by 0.1 m) in order of remaining length,
/// ties in counter-clockwise order from the north wall, and packs from the
/// segment's start. Anything that fits on no wall is tried on a 0.5 m
/// interior grid in row-major order. Leftovers are reported, never dropped.
inline PlacementReport place_furniture(const DesignRequest& request, const FurnitureSelection& selection,
                                       const FootprintTable& table = FootprintTable::defaults()) {
    PlacementReport report;
    std::vector<detail::Item> items;
    for (const auto& category : request.furniture_categories) {
        auto it = selection.picks.find(category);
        if (it == selection.picks.end()) {
            it = std::find_if(selection.picks.begin(), selection.picks.end(),
                              [&](const auto& kv) { return labels_equal(kv.first, category); });
        }
        if (it == selection.picks.end()) {
            report.warnings.push_back("selection has no entry for category '" + category + "'");
            continue;
        }
        for (const auto& pick : it->second) {
            items.push_back({pick.asset_id, category, default_footprint(category, table, &report.warnings)});
        }
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const detail::Item& a, const detail::Item& b) { return a.footprint.area() > b.footprint.area(); });

    auto segments = detail::free_wall_segments(request);
    auto& placed = report.placements;

    auto conflicts = [&](const Placement& p) {
        if (blocks_opening(request, p)) return true;
        return std::any_of(placed.begin(), placed.end(), [&](const Placement& q) { return overlaps(p, q); });
    };

    auto try_segment = [&](detail::WallSegment& seg, const detail::Item& item) -> std::optional<Placement> {
        const bool horizontal = seg.wall == Wall::north || seg.wall == Wall::south;
        const double room_depth = horizontal ? request.room_depth_m : request.room_width_m;
        if (item.footprint.d_m > room_depth + kGeomEps) return std::nullopt;
        double pos = seg.cursor;
        while (pos + item.footprint.w_m <= seg.end + kGeomEps) {
            Placement p = detail::wall_rect(request, seg.wall, pos, item.footprint);
            if (blocks_opening(request, p)) return std::nullopt;  // moving along the wall cannot clear a perpendicular opening
            double next = pos;
            for (const auto& q : placed) {
                if (overlaps(p, q)) next = std::max(next, detail::far_edge_along(request, seg.wall, q));
            }
            if (next == pos) {
                seg.cursor = pos + item.footprint.w_m;
                return p;
            }
            pos = next;
        }
        return std::nullopt;
    };

    for (const auto& item : items) {
        std::vector<detail::WallSegment*> order;
        for (auto& s : segments) order.push_back(&s);
        std::stable_sort(order.begin(), order.end(), [](const detail::WallSegment* a, const detail::WallSegment* b) {
            const double ra = a->end - a->cursor, rb = b->end - b->cursor;
            if (std::abs(ra - rb) > kGeomEps) return ra > rb;
            return a->order < b->order;
        });

        std::optional<Placement> spot;
        for (auto* seg : order) {
            if ((spot = try_segment(*seg, item))) break;
        }
        if (!spot) {
            const auto rows = static_cast<long>(std::floor((request.room_depth_m - item.footprint.d_m) / kInteriorGrid + kGeomEps));
            const auto cols = static_cast<long>(std::floor((request.room_width_m - item.footprint.w_m) / kInteriorGrid + kGeomEps));
            for (long row = 0; row <= rows && !spot; ++row) {
                for (long col = 0; col <= cols; ++col) {
                    Placement p;
                    p.x_m = static_cast<double>(col) * kInteriorGrid;
                    p.y_m = static_cast<double>(row) * kInteriorGrid;
                    p.w_m = item.footprint.w_m;
                    p.d_m = item.footprint.d_m;
                    if (!conflicts(p)) {
                        spot = p;
                        break;
                    }
                }
            }
        }
        if (spot) {
            spot->asset_id = item.asset_id;
            spot->category = item.category;
            placed.push_back(*spot);
        } else {
            report.unplaced.push_back({item.asset_id, item.category, "no free wall segment or interior cell fits a " +
                                                                         json(item.footprint.w_m).dump() + "x" +
                                                                         json(item.footprint.d_m).dump() + " m footprint"});
        }
    }
    return report;
}

struct LayoutLegend {
    Rgb background{255, 255, 255};
    Rgb wall{0, 0, 0};
    Rgb door{150, 75, 0};
    Rgb window{0, 120, 255};
    Rgb furniture{90, 90, 90};
    Rgb outline{0, 0, 0};
    Rgb label{0, 0, 0};

    friend bool operator==(const LayoutLegend&, const LayoutLegend&) = default;
};

inline void to_json(json& j, const Rgb& c) { j = json::array({c.r, c.g, c.b}); }
inline void from_json(const json& j, Rgb& c) {
    c.r = j.at(0).get<std::uint8_t>();
    c.g = j.at(1).get<std::uint8_t>();
    c.b = j.at(2).get<std::uint8_t>();
}
inline void to_json(json& j, const LayoutLegend& l) {
    j = json{{"background", l.background}, {"wall", l.wall},           {"door", l.door},  {"window", l.window},
             {"furniture", l.furniture},   {"outline", l.outline},     {"label", l.label}};
}
inline void from_json(const json& j, LayoutLegend& l) {
    j.at("background").get_to(l.background);
    j.at("wall").get_to(l.wall);
    j.at("door").get_to(l.door);
    j.at("window").get_to(l.window);
    j.at("furniture").get_to(l.furniture);
    j.at("outline").get_to(l.outline);
    j.at("label").get_to(l.label);
}

struct ControlLayout {
    Image image;
    int pixels_per_m = 0;
    std::vector<Placement> placements;
    LayoutLegend legend;

    friend bool operator==(const ControlLayout&, const ControlLayout&) = default;
};

/// JSON sidecar; the image itself travels as PNG.
inline void to_json(json& j, const ControlLayout& l) {
    j = json{{"pixels_per_m", l.pixels_per_m}, {"width", l.image.width}, {"height", l.image.height},
             {"placements", l.placements},     {"legend", l.legend}};
}

inline constexpr int kDefaultPixelsPerM = 100;
inline constexpr int kMaxLayoutSide = 1024;
inline constexpr int kWallPx = 3;
inline constexpr int kOpeningPx = 6;

/// Largest scale <= `requested` whose longest image side stays within
/// kMaxLayoutSide.
inline int effective_pixels_per_m(const DesignRequest& r, int requested) {
    const double longest = std::max(r.room_width_m, r.room_depth_m);
    int ppm = requested;
    while (ppm > 1 && std::lround(longest * ppm) > kMaxLayoutSide) --ppm;
    return ppm;
}

struct PixelRect {
    int x0, y0, x1, y1;  // half-open

    bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    long area() const noexcept { return static_cast<long>(std::max(0, x1 - x0)) * std::max(0, y1 - y0); }
};

/// Pixel bounds of a footprint: each edge rounded independently, so
/// footprints that share an edge share no pixels.
inline PixelRect footprint_pixels(const Placement& p, int ppm, int width, int height) {
    auto px = [ppm](double m) { return static_cast<int>(std::lround(m * ppm)); };
    return {std::clamp(px(p.x_m), 0, width), std::clamp(px(p.y_m), 0, height), std::clamp(px(p.x1()), 0, width),
            std::clamp(px(p.y1()), 0, height)};
}

namespace detail {

inline void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width);
    y1 = std::min(y1, img.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) img.set_rgb(x, y, c);
    }
}

inline void draw_label(Image& img, const PixelRect& box, const std::string& text, Rgb c) {
    const int avail_w = box.x1 - box.x0 - 2;
    const int avail_h = box.y1 - box.y0 - 2;
    if (avail_h < font::kGlyphHeight || avail_w < font::kGlyphWidth) return;
    const int max_chars = (avail_w + 1) / font::kAdvance;
    const std::string shown = spaced_label(text).substr(0, static_cast<std::size_t>(max_chars));
    const int text_w = static_cast<int>(shown.size()) * font::kAdvance - 1;
    const int ox = box.x0 + (box.x1 - box.x0 - text_w) / 2;
    const int oy = box.y0 + (box.y1 - box.y0 - font::kGlyphHeight) / 2;
    for (std::size_t i = 0; i < shown.size(); ++i) {
        const auto g = font::glyph(shown[i]);
        for (int row = 0; row < font::kGlyphHeight; ++row) {
            for (int col = 0; col < font::kGlyphWidth; ++col) {
                if (font::lit(g, col, row)) img.set_rgb(ox + static_cast<int>(i) * font::kAdvance + col, oy + row, c);
            }
        }
    }
}

}  // namespace detail

/// Renders the plan view: white floor, 3 px wall band, door and window bars
/// on the walls, then gray footprints with a 1 px outline just outside each
/// footprint and the category name inside it.
inline ControlLayout compose_layout(const DesignRequest& request, const std::vector<Placement>& placements,
                                    int pixels_per_m = kDefaultPixelsPerM, const LayoutLegend& legend = {}) {
    if (pixels_per_m <= 0) throw CompositionError("pixels_per_m must be positive");
    if (!(request.room_width_m > 0) || !(request.room_depth_m > 0)) throw CompositionError("room has no area");
    if (auto problems = check_placements(request, placements); !problems.empty()) {
        throw CompositionError("invalid placements: " + problems.front());
    }
    ControlLayout out;
    out.pixels_per_m = effective_pixels_per_m(request, pixels_per_m);
    out.placements = placements;
    out.legend = legend;
    const int ppm = out.pixels_per_m;
    const int W = static_cast<int>(std::lround(request.room_width_m * ppm));
    const int H = static_cast<int>(std::lround(request.room_depth_m * ppm));
    if (W <= 0 || H <= 0) throw CompositionError("layout image would be " + std::to_string(W) + "x" + std::to_string(H));

    Image& img = out.image;
    img = Image(W, H, 3);
    detail::fill_rect(img, 0, 0, W, H, legend.background);

    detail::fill_rect(img, 0, 0, W, kWallPx, legend.wall);
    detail::fill_rect(img, 0, H - kWallPx, W, H, legend.wall);
    detail::fill_rect(img, 0, 0, kWallPx, H, legend.wall);
    detail::fill_rect(img, W - kWallPx, 0, W, H, legend.wall);

    for (const auto& o : request.openings) {
        const Rgb c = o.kind == OpeningKind::door ? legend.door : legend.window;
        const auto span = detail::opening_span(request, o);
        const int a0 = static_cast<int>(std::lround(span.lo * ppm));
        const int a1 = static_cast<int>(std::lround(span.hi * ppm));
        switch (o.wall) {
            case Wall::north: detail::fill_rect(img, a0, 0, a1, kOpeningPx, c); break;
            case Wall::south: detail::fill_rect(img, a0, H - kOpeningPx, a1, H, c); break;
            case Wall::east: detail::fill_rect(img, W - kOpeningPx, a0, W, a1, c); break;
            case Wall::west: detail::fill_rect(img, 0, a0, kOpeningPx, a1, c); break;
        }
    }

    std::vector<PixelRect> boxes;
    for (const auto& p : placements) boxes.push_back(footprint_pixels(p, ppm, W, H));
    for (const auto& b : boxes) detail::fill_rect(img, b.x0, b.y0, b.x1, b.y1, legend.furniture);
    auto in_any = [&](int x, int y) {
        return std::any_of(boxes.begin(), boxes.end(), [&](const PixelRect& b) { return b.contains(x, y); });
    };
    for (const auto& b : boxes) {
        if (b.area() == 0) continue;
        for (int y = b.y0 - 1; y <= b.y1; ++y) {
            for (int x = b.x0 - 1; x <= b.x1; ++x) {
                const bool ring = x == b.x0 - 1 || x == b.x1 || y == b.y0 - 1 || y == b.y1;
                if (!ring || x < 0 || y < 0 || x >= W || y >= H || in_any(x, y)) continue;
                img.set_rgb(x, y, legend.outline);
            }
        }
    }
    for (std::size_t i = 0; i < placements.size(); ++i) detail::draw_label(img, boxes[i], placements[i].category, legend.label);
    return out;
}

}  // namespace decomind
