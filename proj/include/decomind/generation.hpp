#pragma once

// Layout-conditioned text-to-image backend contract and the deterministic
// stub backend used by every pipeline test.

#include <array>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "decomind/errors.hpp"
#include "decomind/hash.hpp"
#include "decomind/image.hpp"
#include "decomind/layout.hpp"
#include "decomind/model.hpp"
#include "decomind/promptgen.hpp"

namespace decomind {

struct GenerationParams {
    std::uint64_t seed = 0;
    int steps = 30;
    double guidance_scale = 7.5;
    double conditioning_scale = 1.0;
    int output_width = 512;
    int output_height = 512;

    friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

inline void to_json(json& j, const GenerationParams& p) {
    j = json{{"seed", p.seed},
             {"steps", p.steps},
             {"guidance_scale", p.guidance_scale},
             {"conditioning_scale", p.conditioning_scale},
             {"output_size", json::array({p.output_width, p.output_height})}};
}
inline void from_json(const json& j, GenerationParams& p) {
    p = GenerationParams{};
    if (j.contains("seed")) j.at("seed").get_to(p.seed);
    if (j.contains("steps")) j.at("steps").get_to(p.steps);
    if (j.contains("guidance_scale")) j.at("guidance_scale").get_to(p.guidance_scale);
    if (j.contains("conditioning_scale")) j.at("conditioning_scale").get_to(p.conditioning_scale);
    if (j.contains("output_size")) {
        j.at("output_size").at(0).get_to(p.output_width);
        j.at("output_size").at(1).get_to(p.output_height);
    }
}

inline void validate_params(const GenerationParams& p) {
    if (p.steps < 1) throw ParameterError("steps must be >= 1");
    if (!(p.guidance_scale >= 0.0)) throw ParameterError("guidance_scale must be >= 0");
    if (!(p.conditioning_scale >= 0.0 && p.conditioning_scale <= 2.0)) throw ParameterError("conditioning_scale must lie in [0, 2]");
    if (p.output_width <= 0 || p.output_height <= 0 || p.output_width % 8 != 0 || p.output_height % 8 != 0) {
        throw ParameterError("output_size sides must be positive multiples of 8");
    }
}

enum class BackendStatus { healthy, unhealthy, unreachable };
NLOHMANN_JSON_SERIALIZE_ENUM(BackendStatus, {{BackendStatus::healthy, "healthy"},
                                             {BackendStatus::unhealthy, "unhealthy"},
                                             {BackendStatus::unreachable, "unreachable"}})

struct HealthReport {
    BackendStatus status = BackendStatus::unreachable;
    std::string backend_id;
    std::string model;
    int max_width = 0;
    int max_height = 0;
    double latency_ms = 0.0;
    std::string message;
};

inline void to_json(json& j, const HealthReport& h) {
    j = json{{"status", h.status},         {"backend_id", h.backend_id}, {"model", h.model},    {"max_width", h.max_width},
             {"max_height", h.max_height}, {"latency_ms", h.latency_ms}, {"message", h.message}};
}
inline void from_json(const json& j, HealthReport& h) {
    h.status = j.value("status", BackendStatus::healthy);
    h.backend_id = j.value("backend_id", std::string{});
    h.model = j.value("model", std::string{});
    h.max_width = j.value("max_width", 0);
    h.max_height = j.value("max_height", 0);
    h.latency_ms = j.value("latency_ms", 0.0);
    h.message = j.value("message", std::string{});
}

struct GenerationInput {
    const PromptBundle& prompt;
    const Image& layout;
    const Bytes& layout_png;
    const GenerationParams& params;
    std::chrono::milliseconds timeout;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;

    virtual std::string backend_id() const = 0;
    /// May throw; callers go through probe_backend().
    virtual HealthReport probe() = 0;
    /// Must honour input.timeout and return an image of params.output_size.
    virtual Image generate(const GenerationInput& input) = 0;
};

/// Never throws; failures become an unreachable report.
inline HealthReport probe_backend(GenerationBackend& backend) {
    const auto t0 = std::chrono::steady_clock::now();
    HealthReport h;
    try {
        h = backend.probe();
    } catch (const std::exception& e) {
        h = HealthReport{};
        h.status = BackendStatus::unreachable;
        h.message = e.what();
    }
    if (h.backend_id.empty()) {
        try {
            h.backend_id = backend.backend_id();
        } catch (...) {
        }
    }
    if (h.latency_ms == 0.0) {
        h.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    return h;
}

inline Digest prompt_digest(const PromptBundle& p) { return sha256(canonical_json(p)); }

// Row 0 of a stub image: pixels 0..31 carry the prompt digest, one byte per
// pixel as (b, 255 - b, b ^ 0x5A); pixel 32 carries the raw palette colour.
inline constexpr int kStampPixels = 33;
inline constexpr std::array<Rgb, 8> kStubPalette{{{230, 57, 70},  {42, 157, 143}, {69, 123, 157}, {244, 162, 97},
                                                  {131, 56, 236}, {255, 190, 11}, {58, 134, 255}, {6, 214, 160}}};

inline std::size_t stub_palette_index(std::uint64_t seed) {
    std::uint64_t s = seed;
    return static_cast<std::size_t>(splitmix64(s) % kStubPalette.size());
}

inline std::optional<Digest> decode_prompt_stamp(const Image& img) {
    if (img.channels < 3 || img.width < kStampPixels || img.height < 1) return std::nullopt;
    Digest d{};
    for (int i = 0; i < 32; ++i) {
        const Rgb c = img.rgb(i, 0);
        if (c.g != 255 - c.r || c.b != (c.r ^ 0x5A)) return std::nullopt;
        d[static_cast<std::size_t>(i)] = c.r;
    }
    return d;
}

/// Palette slot stamped by the stub backend, if the image carries one.
inline std::optional<std::size_t> decode_palette_stamp(const Image& img) {
    if (!decode_prompt_stamp(img)) return std::nullopt;
    const Rgb c = img.rgb(32, 0);
    for (std::size_t i = 0; i < kStubPalette.size(); ++i) {
        if (kStubPalette[i] == c) return i;
    }
    return std::nullopt;
}

/// Output = layout resampled to output_size, blended 3:1 with a
/// seed-derived palette colour, prompt digest stamped into row 0.
class StubBackend final : public GenerationBackend {
public:
    static constexpr const char* kId = "stub-v1";
    static constexpr int kMaxSide = 2048;

    explicit StubBackend(std::chrono::milliseconds delay = std::chrono::milliseconds{0}) : delay_(delay) {}

    std::string backend_id() const override { return kId; }

    HealthReport probe() override {
        HealthReport h;
        h.status = BackendStatus::healthy;
        h.backend_id = kId;
        h.model = "deterministic-stub";
        h.max_width = kMaxSide;
        h.max_height = kMaxSide;
        return h;
    }

    Image generate(const GenerationInput& in) override {
        const auto& p = in.params;
        if (p.output_width < kStampPixels || p.output_width > kMaxSide || p.output_height > kMaxSide) {
            throw ParameterError("stub backend supports widths " + std::to_string(kStampPixels) + ".." +
                                 std::to_string(kMaxSide) + " and heights up to " + std::to_string(kMaxSide));
        }
        if (delay_.count() > 0) {
            if (delay_ > in.timeout) {
                std::this_thread::sleep_for(in.timeout);
                throw GenerationError("stub backend timed out", "retry with a longer timeout");
            }
            std::this_thread::sleep_for(delay_);
        }
        Image out = resample_nearest(in.layout, p.output_width, p.output_height);
        if (out.channels != 3) {
            Image rgb(out.width, out.height, 3);
            for (int y = 0; y < out.height; ++y) {
                for (int x = 0; x < out.width; ++x) rgb.set_rgb(x, y, out.rgb(x, y));
            }
            out = std::move(rgb);
        }
        const Rgb tint = kStubPalette[stub_palette_index(p.seed)];
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                const Rgb c = out.rgb(x, y);
                out.set_rgb(x, y,
                            {static_cast<std::uint8_t>((3 * c.r + tint.r) / 4), static_cast<std::uint8_t>((3 * c.g + tint.g) / 4),
                             static_cast<std::uint8_t>((3 * c.b + tint.b) / 4)});
            }
        }
        const Digest d = prompt_digest(in.prompt);
        for (int i = 0; i < 32; ++i) {
            const std::uint8_t b = d[static_cast<std::size_t>(i)];
            out.set_rgb(i, 0, {b, static_cast<std::uint8_t>(255 - b), static_cast<std::uint8_t>(b ^ 0x5A)});
        }
        out.set_rgb(32, 0, tint);
        return out;
    }

private:
    std::chrono::milliseconds delay_;
};

struct GeneratedDesign {
    Image image;
    PromptBundle prompt;
    std::string layout_hash;  // sha256 hex of the layout PNG bytes
    GenerationParams params;
    std::string backend_id;
    double wall_time_s = 0.0;
};

/// Metadata only; the image is stored as its own PNG artifact.
inline void to_json(json& j, const GeneratedDesign& d) {
    j = json{{"prompt", d.prompt},       {"layout_hash", d.layout_hash}, {"params", d.params},
             {"backend_id", d.backend_id}, {"wall_time_s", d.wall_time_s}, {"width", d.image.width},
             {"height", d.image.height}};
}

inline std::string layout_digest(const ControlLayout& layout) { return sha256_hex(encode_png(layout.image)); }

inline constexpr std::chrono::seconds kDefaultGenerationTimeout{300};

inline GeneratedDesign generate(const PromptBundle& prompt, const ControlLayout& layout, const GenerationParams& params,
                                GenerationBackend& backend, std::chrono::milliseconds timeout = kDefaultGenerationTimeout) {
    validate_params(params);
    if (layout.image.empty()) throw GenerationError("layout image is degenerate");

    const HealthReport health = probe_backend(backend);
    if (health.status != BackendStatus::healthy) {
        throw GenerationError("backend " + health.backend_id + " is not healthy: " + health.message,
                              "check the backend and resubmit");
    }
    if ((health.max_width > 0 && params.output_width > health.max_width) ||
        (health.max_height > 0 && params.output_height > health.max_height)) {
        throw ParameterError("backend " + health.backend_id + " accepts at most " + std::to_string(health.max_width) + "x" +
                             std::to_string(health.max_height));
    }

    const Bytes png = encode_png(layout.image);
    GeneratedDesign d;
    d.prompt = prompt;
    d.params = params;
    d.backend_id = backend.backend_id();
    d.layout_hash = sha256_hex(png);

    const auto t0 = std::chrono::steady_clock::now();
    d.image = backend.generate(GenerationInput{prompt, layout.image, png, params, timeout});
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    d.wall_time_s = std::chrono::duration<double>(elapsed).count();

    if (elapsed > timeout) {
        throw GenerationError("generation exceeded the " + std::to_string(timeout.count()) + " ms timeout",
                              "retry with a longer timeout or a smaller output_size");
    }
    if (d.image.width != params.output_width || d.image.height != params.output_height) {
        throw GenerationError("backend returned " + std::to_string(d.image.width) + "x" + std::to_string(d.image.height) +
                              " for a " + std::to_string(params.output_width) + "x" + std::to_string(params.output_height) +
                              " request");
    }
    return d;
}

}  // namespace decomind
