#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "decomind/evaluation.hpp"
#include "decomind/generation.hpp"
#include "decomind/generation_http.hpp"
#include "decomind/layout.hpp"
#include "decomind/model.hpp"
#include "decomind/promptgen.hpp"
#include "decomind/retrieval.hpp"

namespace decomind::service {

/// Service configuration. Loaded from one JSON file; any key listed in
/// kEnvOverrides can be replaced by a DECOMIND_* environment variable.
struct ServiceConfig {
    std::string catalog_path;
    std::string data_dir = "decomind-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    int workers = 2;
    std::string ui_dir;

    LabelConfig labels;
    double scene_threshold = kDefaultSceneThreshold;
    int pixels_per_m = kDefaultPixelsPerM;
    std::map<std::string, Footprint> footprints;
    std::string negative_prompt = kDefaultNegativePrompt;
    GenerationParams generation;

    json provider = {{"type", "stub"}, {"dimension", 64}, {"seed", 0}};
    json backend = {{"type", "stub"}, {"timeout_s", 300}, {"stub_delay_ms", 0}};
    json classifiers = {{"type", "stub"}};

    std::chrono::milliseconds generation_timeout() const {
        return std::chrono::milliseconds(static_cast<long long>(backend.value("timeout_s", 300.0) * 1000.0));
    }
};

inline void from_json(const json& j, ServiceConfig& c) {
    c.catalog_path = j.value("catalog_path", c.catalog_path);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.ui_dir = j.value("ui_dir", c.ui_dir);
    if (j.contains("labels")) j.at("labels").get_to(c.labels);
    c.scene_threshold = j.value("scene_threshold", c.scene_threshold);
    c.pixels_per_m = j.value("pixels_per_m", c.pixels_per_m);
    if (j.contains("footprints")) j.at("footprints").get_to(c.footprints);
    c.negative_prompt = j.value("negative_prompt", c.negative_prompt);
    if (j.contains("generation")) j.at("generation").get_to(c.generation);
    if (j.contains("provider")) c.provider.update(j.at("provider"));
    if (j.contains("backend")) c.backend.update(j.at("backend"));
    if (j.contains("classifiers")) c.classifiers.update(j.at("classifiers"));
}

/// JSON path (slash separated) -> environment variable.
inline const std::map<std::string, std::string> kEnvOverrides{
    {"catalog_path", "DECOMIND_CATALOG_PATH"},
    {"data_dir", "DECOMIND_DATA_DIR"},
    {"host", "DECOMIND_HOST"},
    {"port", "DECOMIND_PORT"},
    {"workers", "DECOMIND_WORKERS"},
    {"ui_dir", "DECOMIND_UI_DIR"},
    {"scene_threshold", "DECOMIND_SCENE_THRESHOLD"},
    {"pixels_per_m", "DECOMIND_PIXELS_PER_M"},
    {"backend/type", "DECOMIND_BACKEND_TYPE"},
    {"backend/url", "DECOMIND_BACKEND_URL"},
    {"backend/timeout_s", "DECOMIND_BACKEND_TIMEOUT_S"},
    {"backend/stub_delay_ms", "DECOMIND_STUB_DELAY_MS"},
    {"provider/type", "DECOMIND_PROVIDER_TYPE"},
    {"classifiers/type", "DECOMIND_CLASSIFIERS_TYPE"},
};

/// Environment values are parsed as JSON when possible (numbers), else
/// taken as strings.
inline void apply_env_overrides(json& j, const std::function<const char*(const char*)>& getenv_fn = ::getenv) {
    for (const auto& [path, var] : kEnvOverrides) {
        const char* v = getenv_fn(var.c_str());
        if (!v) continue;
        json value = json::parse(v, nullptr, false);
        if (value.is_discarded() || value.is_object() || value.is_array()) value = std::string(v);
        j[json::json_pointer("/" + path)] = value;
    }
}

inline ServiceConfig load_config(const std::filesystem::path& file, const std::function<const char*(const char*)>& getenv_fn = ::getenv) {
    json j = json::object();
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw ConfigurationError("cannot read config file " + file.string());
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigurationError("config file " + file.string() + " is not valid JSON: " + e.what());
        }
        // Relative paths in the file are relative to the file.
        const auto base = file.parent_path();
        for (const char* key : {"catalog_path", "data_dir", "ui_dir"}) {
            if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty()) {
                std::filesystem::path p = j[key].get<std::string>();
                if (p.is_relative()) j[key] = (base / p).lexically_normal().string();
            }
        }
    }
    apply_env_overrides(j, getenv_fn);
    return j.get<ServiceConfig>();
}

/// Factories for the three plug-in families, keyed by the config "type".
/// Stubs are pre-registered; real models register their own factories.
struct PluginRegistry {
    using ProviderFactory = std::function<std::unique_ptr<EmbeddingProvider>(const json&)>;
    using BackendFactory = std::function<std::unique_ptr<GenerationBackend>(const json&)>;
    using ClassifierFactory =
        std::function<std::pair<std::unique_ptr<LabelClassifier>, std::unique_ptr<LabelClassifier>>(const json&, const LabelConfig&)>;

    std::map<std::string, ProviderFactory> providers;
    std::map<std::string, BackendFactory> backends;
    std::map<std::string, ClassifierFactory> classifiers;

    static PluginRegistry with_builtins() {
        PluginRegistry r;
        r.providers["stub"] = [](const json& c) {
            return std::make_unique<StubEmbeddingProvider>(c.value("dimension", std::size_t{64}), c.value("seed", std::uint64_t{0}));
        };
        r.backends["stub"] = [](const json& c) {
            return std::make_unique<StubBackend>(std::chrono::milliseconds(c.value("stub_delay_ms", 0)));
        };
        r.backends["http"] = [](const json& c) -> std::unique_ptr<GenerationBackend> {
            if (!c.contains("url")) throw ConfigurationError("http backend needs backend.url");
            return std::make_unique<HttpSidecarBackend>(c.at("url").get<std::string>());
        };
        r.classifiers["stub"] = [](const json& c, const LabelConfig& labels) {
            const double conf = c.value("confidence", 0.9);
            auto room_key = c.value("room_key", labels.room_types);
            auto style_key = c.value("style_key", labels.styles);
            return std::pair<std::unique_ptr<LabelClassifier>, std::unique_ptr<LabelClassifier>>{
                std::make_unique<PaletteKeyedClassifier>("stub-room-type", labels.room_types, room_key, conf),
                std::make_unique<PaletteKeyedClassifier>("stub-style", labels.styles, style_key, conf)};
        };
        return r;
    }

    std::unique_ptr<EmbeddingProvider> make_provider(const json& c) const {
        return lookup(providers, c, "provider")(c);
    }
    std::unique_ptr<GenerationBackend> make_backend(const json& c) const { return lookup(backends, c, "backend")(c); }
    auto make_classifiers(const json& c, const LabelConfig& labels) const { return lookup(classifiers, c, "classifiers")(c, labels); }

private:
    template <class Map>
    static const typename Map::mapped_type& lookup(const Map& m, const json& c, const char* family) {
        const auto type = c.value("type", std::string("stub"));
        auto it = m.find(type);
        if (it == m.end()) throw ConfigurationError(std::string("unknown ") + family + " type '" + type + "'");
        return it->second;
    }
};

}  // namespace decomind::service
