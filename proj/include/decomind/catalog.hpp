#pragma once

// Furniture catalog ingestion, the two cleaning passes (scene-image
// exclusion and background removal) and the on-disk index archive.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "decomind/errors.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"

namespace decomind {

namespace fs = std::filesystem;

using Warnings = std::vector<std::string>;

struct CatalogIndex {
    std::string store;
    std::string root_path;
    std::vector<FurnitureAsset> assets;
    std::map<std::string, EmbeddingVector> embeddings;
    std::string created_at;
    std::string provider_id;

    const FurnitureAsset* find(std::string_view asset_id) const {
        auto it = std::find_if(assets.begin(), assets.end(), [&](const auto& a) { return a.asset_id == asset_id; });
        return it == assets.end() ? nullptr : &*it;
    }

    std::size_t usable_count() const {
        return static_cast<std::size_t>(std::count_if(assets.begin(), assets.end(), [](const auto& a) { return !a.excluded; }));
    }

    std::set<std::string> categories() const {
        std::set<std::string> out;
        for (const auto& a : assets) {
            if (!a.excluded) out.insert(a.category);
        }
        return out;
    }

    fs::path image_file(const FurnitureAsset& a) const { return fs::path(root_path) / fs::path(a.image_path); }

    friend bool operator==(const CatalogIndex&, const CatalogIndex&) = default;
};

/// Lists every violated CatalogIndex invariant; empty when valid.
inline std::vector<std::string> check_index(const CatalogIndex& index) {
    std::vector<std::string> problems;
    std::set<std::string> ids;
    for (const auto& a : index.assets) {
        if (!ids.insert(a.asset_id).second) problems.push_back("duplicate asset_id " + a.asset_id);
        if (a.excluded && a.exclusion_reason == ExclusionReason::none) problems.push_back(a.asset_id + ": excluded without reason");
    }
    if (!index.embeddings.empty()) {
        for (const auto& a : index.assets) {
            if (!a.excluded && !index.embeddings.count(a.asset_id)) problems.push_back(a.asset_id + ": missing embedding");
        }
    }
    std::size_t dim = 0;
    for (const auto& [id, e] : index.embeddings) {
        if (!ids.count(id)) problems.push_back("embedding for unknown asset " + id);
        if (e.provider_id != index.provider_id) problems.push_back(id + ": provider_id mismatch");
        if (dim == 0) dim = e.dimension();
        if (e.dimension() != dim) problems.push_back(id + ": dimension mismatch");
    }
    return problems;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace detail {

inline bool is_image_extension(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::optional<SourceSplit> split_from_folder(const std::string& name) {
    const auto n = normalize_label(name);
    if (n == "train" || n == "training") return SourceSplit::train;
    if (n == "validation" || n == "valid" || n == "val") return SourceSplit::validation;
    if (n == "test" || n == "testing") return SourceSplit::test;
    return std::nullopt;
}

inline bool hidden_component(const fs::path& rel) {
    for (const auto& part : rel) {
        const auto s = part.string();
        if (!s.empty() && (s[0] == '.' || s[0] == '_')) return true;
    }
    return false;
}

}  // namespace detail

inline constexpr const char* kUncategorized = "uncategorized";

/// Walks `root_path` for PNG/JPEG files laid out as `[split/]category/file`.
/// Files or folders whose name starts with '.' or '_' are skipped (the
/// matting pass writes its output under `_matted/`).
inline CatalogIndex ingest_catalog(const fs::path& root_path, const std::string& store,
                                   const std::map<std::string, std::string>& category_map = {},
                                   Warnings* warnings = nullptr) {
    std::error_code ec;
    if (!fs::is_directory(root_path, ec)) throw ConfigurationError("catalog root does not exist: " + root_path.string());

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root_path, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = fs::relative(it->path(), root_path);
        if (detail::hidden_component(rel) || !detail::is_image_extension(rel)) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

    CatalogIndex index;
    index.store = store;
    index.root_path = root_path.string();
    index.created_at = utc_timestamp();

    std::set<std::string> used_ids;
    std::size_t readable = 0;
    for (const auto& rel : files) {
        FurnitureAsset a;
        a.image_path = rel.generic_string();
        std::string id = a.image_path;
        std::replace(id.begin(), id.end(), '/', '_');
        if (!used_ids.insert(id).second) {
            int n = 2;
            while (!used_ids.insert(id + "~" + std::to_string(n)).second) ++n;
            if (warnings) warnings->push_back("asset_id collision for " + a.image_path + ", suffixed ~" + std::to_string(n));
            id += "~" + std::to_string(n);
        }
        a.asset_id = id;

        std::vector<std::string> dirs;
        for (const auto& part : rel.parent_path()) dirs.push_back(part.string());
        if (!dirs.empty()) {
            if (auto split = detail::split_from_folder(dirs.front())) {
                a.source_split = *split;
                dirs.erase(dirs.begin());
            }
        }
        if (dirs.empty()) {
            a.category = kUncategorized;
        } else {
            const auto& folder = dirs.back();
            auto it = category_map.find(folder);
            a.category = it != category_map.end() ? normalize_label(it->second) : normalize_label(folder);
        }

        try {
            const Image img = load_image(root_path / rel);
            if (img.empty()) throw Error("zero-sized image");
            a.has_alpha = img.has_alpha();
            ++readable;
        } catch (const Error& e) {
            a.exclude(ExclusionReason::low_quality);
            if (warnings) warnings->push_back(a.asset_id + ": unreadable (" + e.what() + ")");
        }
        index.assets.push_back(std::move(a));
    }
    if (readable == 0) throw IngestionError("no readable images under " + root_path.string());
    return index;
}

/// Scene probability for one asset; may throw, which is treated as a
/// detector failure.
using SceneDetector = std::function<double(const FurnitureAsset&, const Image&)>;

inline constexpr double kDefaultSceneThreshold = 0.5;

/// Marks assets whose scene probability exceeds `threshold` as
/// excluded(scene_image). Detector failures leave the asset untouched.
inline CatalogIndex flag_scene_images(CatalogIndex index, const SceneDetector& detector,
                                      double threshold = kDefaultSceneThreshold, Warnings* warnings = nullptr) {
    for (auto& a : index.assets) {
        if (a.excluded) continue;
        try {
            const Image img = load_image(index.image_file(a));
            const double p = detector(a, img);
            if (!(p >= 0.0 && p <= 1.0)) throw Error("probability out of range");
            if (p > threshold) a.exclude(ExclusionReason::scene_image);
        } catch (const std::exception& e) {
            if (warnings) warnings->push_back(a.asset_id + ": scene detector failed (" + e.what() + "), kept");
        }
    }
    return index;
}

/// Probability 1 when the file name contains any of the keywords.
inline SceneDetector keyword_scene_detector(std::vector<std::string> keywords = {"room", "scene", "interior"}) {
    return [keywords = std::move(keywords)](const FurnitureAsset& a, const Image&) {
        const auto name = normalize_label(fs::path(a.image_path).filename().string());
        for (const auto& k : keywords) {
            if (name.find(k) != std::string::npos) return 1.0;
        }
        return 0.0;
    };
}

/// Foreground mask producer: 1-channel image, 255 = foreground.
using MattingBackend = std::function<Image(const Image&)>;

/// Applies `mask` as the alpha channel. RGB values are copied unchanged.
inline Image remove_background(const Image& image, const Image& mask, const std::string& asset_id = {}) {
    if (image.empty()) throw ProcessingError(asset_id, "empty image");
    if (mask.channels != 1) throw ProcessingError(asset_id, "mask must have a single channel");
    if (mask.width != image.width || mask.height != image.height) {
        throw ProcessingError(asset_id, "mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                            " but image is " + std::to_string(image.width) + "x" +
                                            std::to_string(image.height));
    }
    Image out(image.width, image.height, 4);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const Rgb c = image.rgb(x, y);
            auto* d = out.at(x, y);
            d[0] = c.r;
            d[1] = c.g;
            d[2] = c.b;
            d[3] = mask.at(x, y)[0];
        }
    }
    return out;
}

/// Flood-fills from the border through pixels within `tolerance` of the
/// mean corner colour; everything reached is background. Suits product
/// shots on plain backdrops.
inline MattingBackend corner_key_matting(int tolerance = 24) {
    return [tolerance](const Image& img) {
        if (img.empty()) throw Error("empty image");
        const int w = img.width, h = img.height;
        int sum[3] = {0, 0, 0};
        for (auto [x, y] : {std::pair{0, 0}, {w - 1, 0}, {0, h - 1}, {w - 1, h - 1}}) {
            const Rgb c = img.rgb(x, y);
            sum[0] += c.r;
            sum[1] += c.g;
            sum[2] += c.b;
        }
        const int bg[3] = {sum[0] / 4, sum[1] / 4, sum[2] / 4};
        auto near_bg = [&](int x, int y) {
            const Rgb c = img.rgb(x, y);
            return std::abs(c.r - bg[0]) <= tolerance && std::abs(c.g - bg[1]) <= tolerance && std::abs(c.b - bg[2]) <= tolerance;
        };
        Image mask(w, h, 1, 255);
        std::deque<std::pair<int, int>> queue;
        auto visit = [&](int x, int y) {
            if (x < 0 || y < 0 || x >= w || y >= h) return;
            auto* m = mask.at(x, y);
            if (*m == 0 || !near_bg(x, y)) return;
            *m = 0;
            queue.emplace_back(x, y);
        };
        for (int x = 0; x < w; ++x) {
            visit(x, 0);
            visit(x, h - 1);
        }
        for (int y = 0; y < h; ++y) {
            visit(0, y);
            visit(w - 1, y);
        }
        while (!queue.empty()) {
            auto [x, y] = queue.front();
            queue.pop_front();
            visit(x + 1, y);
            visit(x - 1, y);
            visit(x, y + 1);
            visit(x, y - 1);
        }
        return mask;
    };
}

inline constexpr const char* kMattedDir = "_matted";

/// Runs the matting backend over every usable asset that has no alpha yet
/// and stores the transparent PNG under `<root>/_matted/`.
inline CatalogIndex apply_matting(CatalogIndex index, const MattingBackend& backend, Warnings* warnings = nullptr) {
    const fs::path out_dir = fs::path(index.root_path) / kMattedDir;
    for (auto& a : index.assets) {
        if (a.excluded || a.has_alpha) continue;
        try {
            const Image img = load_image(index.image_file(a));
            const Image rgba = remove_background(img, backend(img), a.asset_id);
            fs::create_directories(out_dir);
            const std::string rel = std::string(kMattedDir) + "/" + fs::path(a.asset_id).replace_extension(".png").string();
            save_png(fs::path(index.root_path) / rel, rgba);
            a.image_path = rel;
            a.has_alpha = true;
        } catch (const std::exception& e) {
            if (warnings) warnings->push_back(a.asset_id + ": background removal failed (" + e.what() + ")");
        }
    }
    return index;
}

// Archive layout (all integers little-endian):
//   "DMCATLOG" | u32 format_version | u64 manifest_len | manifest JSON
//   | u64 block_len | float32[count * dimension]
// The block holds vectors in manifest "embedding_ids" order.
inline constexpr std::uint32_t kCatalogFormatVersion = 1;
inline constexpr char kCatalogMagic[8] = {'D', 'M', 'C', 'A', 'T', 'L', 'O', 'G'};

namespace detail {

template <class T>
void put_le(Bytes& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos, const char* what) {
    if (in.size() - pos < sizeof(T)) {
        throw FormatError(std::string("catalog archive truncated while reading ") + what + " (format version " +
                          std::to_string(kCatalogFormatVersion) + " expected)");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
}

}  // namespace detail

inline Bytes serialize_index(const CatalogIndex& index) {
    if (auto problems = check_index(index); !problems.empty()) throw Error("invalid catalog index: " + problems.front());
    std::size_t dim = index.embeddings.empty() ? 0 : index.embeddings.begin()->second.dimension();
    json manifest{{"format_version", kCatalogFormatVersion},
                  {"store", index.store},
                  {"root_path", index.root_path},
                  {"created_at", index.created_at},
                  {"provider_id", index.provider_id},
                  {"dimension", dim},
                  {"assets", index.assets}};
    json ids = json::array();
    for (const auto& [id, _] : index.embeddings) ids.push_back(id);
    manifest["embedding_ids"] = std::move(ids);
    const std::string text = manifest.dump();

    Bytes out(kCatalogMagic, kCatalogMagic + 8);
    detail::put_le<std::uint32_t>(out, kCatalogFormatVersion);
    detail::put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    detail::put_le<std::uint64_t>(out, index.embeddings.size() * dim * 4);
    for (const auto& [_, e] : index.embeddings) {
        for (float f : e.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_le<std::uint32_t>(out, bits);
        }
    }
    return out;
}

inline CatalogIndex deserialize_index(std::span<const std::uint8_t> in) {
    if (in.size() < 12 || std::memcmp(in.data(), kCatalogMagic, 8) != 0) {
        throw FormatError("not a catalog archive (missing header; expected format version " +
                          std::to_string(kCatalogFormatVersion) + ")");
    }
    std::size_t pos = 8;
    const auto version = detail::get_le<std::uint32_t>(in, pos, "format version");
    if (version != kCatalogFormatVersion) {
        throw FormatError("catalog format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCatalogFormatVersion) + ")");
    }
    const auto manifest_len = detail::get_le<std::uint64_t>(in, pos, "manifest length");
    if (in.size() - pos < manifest_len) throw FormatError("catalog archive truncated in manifest (format version 1)");
    json manifest;
    try {
        manifest = json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + manifest_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt catalog manifest (format version 1): ") + e.what());
    }
    pos += manifest_len;
    const auto block_len = detail::get_le<std::uint64_t>(in, pos, "embedding block length");
    if (in.size() - pos != block_len) throw FormatError("catalog embedding block size mismatch (format version 1)");

    CatalogIndex index;
    try {
        manifest.at("store").get_to(index.store);
        manifest.at("root_path").get_to(index.root_path);
        manifest.at("created_at").get_to(index.created_at);
        manifest.at("provider_id").get_to(index.provider_id);
        manifest.at("assets").get_to(index.assets);
        const auto dim = manifest.at("dimension").get<std::size_t>();
        const auto ids = manifest.at("embedding_ids").get<std::vector<std::string>>();
        if (ids.size() * dim * 4 != block_len) throw FormatError("embedding block does not match manifest (format version 1)");
        for (const auto& id : ids) {
            EmbeddingVector e;
            e.provider_id = index.provider_id;
            e.values.resize(dim);
            for (auto& f : e.values) {
                const auto bits = detail::get_le<std::uint32_t>(in, pos, "embedding");
                std::memcpy(&f, &bits, 4);
            }
            index.embeddings.emplace(id, std::move(e));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("catalog manifest missing fields (format version 1): ") + e.what());
    }
    return index;
}

/// Writes via a temporary file and rename so readers never see a partial archive.
inline void persist_index(const CatalogIndex& index, const fs::path& file) {
    const Bytes bytes = serialize_index(index);
    const fs::path tmp = file.string() + ".tmp";
    write_file_bytes(tmp, bytes);
    fs::rename(tmp, file);
}

inline CatalogIndex load_index(const fs::path& file) {
    std::error_code ec;
    if (!fs::exists(file, ec)) throw ConfigurationError("catalog index not found: " + file.string());
    const Bytes bytes = read_file_bytes(file);
    return deserialize_index(bytes);
}

}  // namespace decomind
