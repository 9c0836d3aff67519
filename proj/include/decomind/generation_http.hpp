#pragma once

// HTTP sidecar transport for generation backends.
//
//   GET  /health    -> HealthReport JSON
//   POST /generate  -> multipart {prompt: JSON, layout: PNG, params: JSON}, answers image/png
//
// HttpSidecarBackend is the client side; register_sidecar_routes() exposes
// any in-process backend over the same protocol.

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>

#include "decomind/generation.hpp"

namespace decomind {

inline constexpr std::chrono::seconds kProbeTimeout{5};

class HttpSidecarBackend final : public GenerationBackend {
public:
    explicit HttpSidecarBackend(std::string base_url) : base_url_(std::move(base_url)) {}

    std::string backend_id() const override {
        std::lock_guard lock(mu_);
        return reported_id_.empty() ? "http:" + base_url_ : reported_id_;
    }

    HealthReport probe() override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(kProbeTimeout);
        cli.set_read_timeout(kProbeTimeout);
        cli.set_write_timeout(kProbeTimeout);
        const auto t0 = std::chrono::steady_clock::now();
        auto res = cli.Get("/health");
        HealthReport h;
        if (!res) {
            h.status = BackendStatus::unreachable;
            h.backend_id = "http:" + base_url_;
            h.message = httplib::to_string(res.error());
            return h;
        }
        if (res->status != 200) {
            h.status = BackendStatus::unhealthy;
            h.backend_id = "http:" + base_url_;
            h.message = "health endpoint answered " + std::to_string(res->status);
            return h;
        }
        h = json::parse(res->body).get<HealthReport>();
        h.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (!h.backend_id.empty()) {
            std::lock_guard lock(mu_);
            reported_id_ = h.backend_id;
        }
        return h;
    }

    Image generate(const GenerationInput& in) override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(kProbeTimeout);
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(in.timeout) + std::chrono::seconds(1));
        const std::string layout(in.layout_png.begin(), in.layout_png.end());
        httplib::MultipartFormDataItems items{
            {"prompt", json(in.prompt).dump(), "prompt.json", "application/json"},
            {"layout", layout, "layout.png", "image/png"},
            {"params", json(in.params).dump(), "params.json", "application/json"},
        };
        auto res = cli.Post("/generate", items);
        if (!res) {
            if (res.error() == httplib::Error::Read) {
                throw GenerationError("sidecar at " + base_url_ + " timed out", "retry later or raise the backend timeout");
            }
            throw GenerationError("sidecar at " + base_url_ + " failed: " + httplib::to_string(res.error()),
                                  "check that the sidecar is running");
        }
        if (res->status == 400 || res->status == 413 || res->status == 422) {
            throw ParameterError("sidecar rejected parameters: " + res->body);
        }
        if (res->status != 200) {
            throw GenerationError("sidecar answered " + std::to_string(res->status) + ": " + res->body, "retry later");
        }
        const Bytes png(res->body.begin(), res->body.end());
        return decode_png(png);
    }

private:
    std::string base_url_;
    mutable std::mutex mu_;
    std::string reported_id_;
};

/// Serves `backend` over the sidecar protocol; calls are serialized.
inline void register_sidecar_routes(httplib::Server& server, std::shared_ptr<GenerationBackend> backend,
                                    std::chrono::milliseconds timeout = kDefaultGenerationTimeout) {
    auto mu = std::make_shared<std::mutex>();
    server.Get("/health", [backend](const httplib::Request&, httplib::Response& res) {
        res.set_content(json(probe_backend(*backend)).dump(), "application/json");
    });
    server.Post("/generate", [backend, mu, timeout](const httplib::Request& req, httplib::Response& res) {
        try {
            if (!req.has_file("prompt") || !req.has_file("layout") || !req.has_file("params")) {
                res.status = 400;
                res.set_content("multipart fields prompt, layout and params are required", "text/plain");
                return;
            }
            const auto prompt = json::parse(req.get_file_value("prompt").content).get<PromptBundle>();
            const auto params = json::parse(req.get_file_value("params").content).get<GenerationParams>();
            const auto& layout_text = req.get_file_value("layout").content;
            const Bytes layout_png(layout_text.begin(), layout_text.end());
            const Image layout = decode_png(layout_png);
            validate_params(params);
            Image out;
            {
                std::lock_guard lock(*mu);
                out = backend->generate(GenerationInput{prompt, layout, layout_png, params, timeout});
            }
            const Bytes png = encode_png(out);
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        } catch (const ParameterError& e) {
            res.status = 422;
            res.set_content(e.what(), "text/plain");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(e.what(), "text/plain");
        }
    });
}

}  // namespace decomind
