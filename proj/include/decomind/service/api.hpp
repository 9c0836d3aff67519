#pragma once

// REST surface over Service.
//
//   POST /api/jobs                          -> 202 {job_id}
//   GET  /api/jobs                          ?state=&room_type=&style=&page=&page_size=
//   GET  /api/jobs/{id}
//   GET  /api/jobs/{id}/artifacts/{stage}   raw bytes
//   GET  /api/catalog/categories
//   GET  /api/labels
//   GET  /api/health

#include <string>

#include <httplib.h>

#include "decomind/service/service.hpp"

namespace decomind::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& type, const std::string& message) {
    send_json(res, status, {{"error", {{"type", type}, {"message", message}}}});
}

inline int query_int(const httplib::Request& req, const char* key, int fallback) {
    if (!req.has_param(key)) return fallback;
    try {
        return std::stoi(req.get_param_value(key));
    } catch (const std::exception&) {
        throw RequestError(std::string("query parameter '") + key + "' must be an integer");
    }
}

template <class F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const ValidationRejected& e) {
        send_json(res, 400, {{"error", {{"type", "validation_error"}, {"message", e.what()}}}, {"validation", e.report()}});
    } catch (const RequestError& e) {
        send_error(res, 400, "request_error", e.what());
    } catch (const ServiceNotReady& e) {
        send_error(res, 503, "not_ready", e.what());
    } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const NotReadyError& e) {
        send_error(res, 409, "not_ready", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal_error", e.what());
    }
}

}  // namespace detail

inline void register_api_routes(httplib::Server& server, Service& svc) {
    using detail::guarded;
    using detail::send_json;

    server.Post("/api/jobs", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) throw RequestError("request body is not valid JSON");
            const auto id = svc.submit_job(body);
            send_json(res, 202, {{"job_id", id}, {"state", "queued"}});
        });
    });

    server.Get("/api/jobs", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            JobFilter f;
            if (req.has_param("state")) {
                auto st = parse_state(req.get_param_value("state"));
                if (!st) throw RequestError("unknown state '" + req.get_param_value("state") + "'");
                f.state = st;
            }
            if (req.has_param("room_type")) f.room_type = req.get_param_value("room_type");
            if (req.has_param("style")) f.style = req.get_param_value("style");
            const int page = detail::query_int(req, "page", 1);
            const int size = detail::query_int(req, "page_size", 20);
            if (page < 1 || size < 1 || size > 200) throw RequestError("page must be >= 1 and page_size in 1..200");
            send_json(res, 200, svc.list_jobs(f, page, size));
        });
    });

    server.Get(R"(/api/jobs/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, svc.get_job(req.matches[1].str())); });
    });

    server.Get(R"(/api/jobs/([^/]+)/artifacts/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto a = svc.get_artifact(req.matches[1].str(), req.matches[2].str());
            res.status = 200;
            res.set_content(std::string(a.bytes.begin(), a.bytes.end()), a.content_type);
        });
    });

    server.Get("/api/catalog/categories", [&svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            if (!svc.ready()) throw ServiceNotReady("catalog is not loaded");
            send_json(res, 200, {{"categories", svc.catalog_categories()}});
        });
    });

    server.Get("/api/labels", [&svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, svc.labels()); });
    });

    server.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json h = svc.health();
            send_json(res, h.value("ready", false) ? 200 : 503, h);
        });
    });

    if (!svc.config().ui_dir.empty()) server.set_mount_point("/", svc.config().ui_dir);
}

}  // namespace decomind::service
