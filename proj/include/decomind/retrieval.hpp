#pragma once

// Text-to-furniture retrieval over a shared text/image embedding space.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "decomind/catalog.hpp"
#include "decomind/errors.hpp"
#include "decomind/hash.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"

namespace decomind {

/// Dual-encoder contract. Both encoders must emit unit-norm vectors of
/// `dimension()` components and be deterministic.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string provider_id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed_text(const std::string& text) const = 0;
    virtual EmbeddingVector embed_image(const Image& image) const = 0;
};

/// Seeded hash of the input bytes expanded into a pseudo-random unit
/// vector. Text and image inputs are domain-separated, so the stub carries
/// no semantics; it exists to make retrieval reproducible in tests.
class StubEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit StubEmbeddingProvider(std::size_t dimension = 64, std::uint64_t seed = 0)
        : dimension_(dimension), seed_(seed) {
        if (dimension_ == 0) throw ConfigurationError("embedding dimension must be positive");
    }

    std::string provider_id() const override {
        return "stub-hash-v1/d" + std::to_string(dimension_) + "/s" + std::to_string(seed_);
    }
    std::size_t dimension() const override { return dimension_; }

    EmbeddingVector embed_text(const std::string& text) const override { return from_digest(sha256("text\x1f" + text)); }

    EmbeddingVector embed_image(const Image& image) const override {
        Bytes buf;
        buf.reserve(image.pixels.size() + 16);
        const std::string head = "image\x1f" + std::to_string(image.width) + "x" + std::to_string(image.height) + "x" +
                                 std::to_string(image.channels) + "\x1f";
        buf.insert(buf.end(), head.begin(), head.end());
        buf.insert(buf.end(), image.pixels.begin(), image.pixels.end());
        return from_digest(sha256(buf));
    }

    EmbeddingVector from_digest(const Digest& d) const {
        std::uint64_t state = digest_prefix_u64(d) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
        std::vector<double> raw(dimension_);
        for (auto& v : raw) v = 2.0 * unit_uniform(state) - 1.0;
        return EmbeddingVector::unit(raw, provider_id());
    }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// "a {style} {category} for a {room_type}" with spaced lowercase labels.
inline std::string build_query(const DesignRequest& request, const std::string& category) {
    const bool known = std::any_of(request.furniture_categories.begin(), request.furniture_categories.end(),
                                   [&](const std::string& c) { return labels_equal(c, category); });
    if (!known) throw RequestError("category '" + category + "' is not part of the request");
    return "a " + spaced_label(request.style) + " " + spaced_label(category) + " for a " + spaced_label(request.room_type);
}

inline void check_embedding(const EmbeddingVector& e, const EmbeddingProvider& provider) {
    if (e.dimension() != provider.dimension()) throw Error("provider returned a vector of the wrong dimension");
    if (e.provider_id != provider.provider_id()) throw Error("provider returned a vector tagged with another provider_id");
    if (!is_unit(e)) throw Error("provider returned a non-unit vector");
}

/// Embeds every usable asset image. Per-asset failures exclude the asset
/// (low_quality); more than half failing is fatal.
inline CatalogIndex index_embeddings(CatalogIndex index, const EmbeddingProvider& provider, Warnings* warnings = nullptr) {
    if (index.usable_count() == 0) throw IngestionError("catalog has no usable assets to embed");
    index.embeddings.clear();
    index.provider_id = provider.provider_id();
    std::size_t attempted = 0, failed = 0;
    for (auto& a : index.assets) {
        if (a.excluded) continue;
        ++attempted;
        try {
            EmbeddingVector e = provider.embed_image(load_image(index.image_file(a)));
            check_embedding(e, provider);
            index.embeddings.emplace(a.asset_id, std::move(e));
        } catch (const std::exception& e) {
            ++failed;
            a.exclude(ExclusionReason::low_quality);
            if (warnings) warnings->push_back(a.asset_id + ": embedding failed (" + e.what() + "), excluded");
        }
    }
    if (2 * failed > attempted) {
        throw IngestionError("embedding failed for " + std::to_string(failed) + " of " + std::to_string(attempted) + " assets");
    }
    return index;
}

/// Top-k usable assets of `category` by dot-product similarity.
inline std::vector<ScoredAsset> rank_assets(const EmbeddingVector& query, const CatalogIndex& index,
                                            const std::string& category, std::size_t k) {
    if (k == 0) throw RankingError("k must be positive");
    if (query.provider_id != index.provider_id) {
        throw RankingError("query embedded by '" + query.provider_id + "' but index by '" + index.provider_id + "'");
    }
    std::vector<ScoredAsset> candidates;
    for (const auto& a : index.assets) {
        if (a.excluded || !labels_equal(a.category, category)) continue;
        auto it = index.embeddings.find(a.asset_id);
        if (it == index.embeddings.end()) throw RankingError(a.asset_id + " has no embedding; index the catalog first");
        candidates.push_back({a.asset_id, dot(query, it->second)});
    }
    const auto n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), ranks_before);
    candidates.resize(n);
    return candidates;
}

inline FurnitureSelection select_furniture(const DesignRequest& request, const CatalogIndex& index,
                                           const EmbeddingProvider& provider) {
    if (request.items_per_category < 1) throw RequestError("items_per_category must be positive");
    FurnitureSelection sel;
    for (const auto& category : request.furniture_categories) {
        const auto query = provider.embed_text(build_query(request, category));
        sel.picks[category] = rank_assets(query, index, category, static_cast<std::size_t>(request.items_per_category));
    }
    return sel;
}

}  // namespace decomind
