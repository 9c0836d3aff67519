// decomind command line: catalog building, single runs, and the REST server.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "decomind/decomind.hpp"

namespace fs = std::filesystem;
using decomind::json;
using namespace decomind;

namespace {

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigurationError("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw RequestError(p.string() + " is not valid JSON: " + e.what());
    }
}

void write_json_file(const fs::path& p, const json& j) {
    const std::string text = j.dump(2) + "\n";
    write_file_bytes(p, Bytes(text.begin(), text.end()));
}

DesignRequest read_request(const fs::path& p, const LabelConfig& labels) {
    auto result = parse_request(read_json_file(p), labels);
    if (auto* rep = std::get_if<ValidationReport>(&result)) {
        throw service::ValidationRejected(*rep);
    }
    return std::get<DesignRequest>(result);
}

service::ServiceConfig config_or_default(const std::string& path) { return service::load_config(path); }

void print_warnings(const Warnings& w) {
    for (const auto& line : w) std::cerr << "warning: " << line << "\n";
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int serve_until_signal(httplib::Server& server, const std::string& host, int port, const std::string& banner) {
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int bound = port;
    if (port == 0) {
        bound = server.bind_to_any_port(host);
    } else if (!server.bind_to_port(host, port)) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    if (bound < 0) {
        std::cerr << "error: cannot bind " << host << "\n";
        return 1;
    }
    std::cout << banner << " listening on " << host << ":" << bound << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
    return 0;
}

// Export names for the artifacts of one run.
const std::map<std::string, std::string> kExportNames{
    {"selection", "selection.json"}, {"layout", "layout.png"}, {"layout_meta", "layout.json"}, {"prompt", "prompt.json"},
    {"design", "design.png"},        {"design_meta", "design.json"}, {"report", "report.json"},  {"warnings", "warnings.json"},
};

int cmd_run(const std::string& config_path, const std::string& index_path, const std::string& request_path,
            const fs::path& out_dir) {
    auto cfg = config_or_default(config_path);
    if (!index_path.empty()) cfg.catalog_path = index_path;
    if (cfg.catalog_path.empty()) throw ConfigurationError("no catalog index: pass --index or set catalog_path");
    if (config_path.empty() && !std::getenv("DECOMIND_DATA_DIR")) cfg.data_dir = (out_dir / ".decomind").string();
    fs::create_directories(out_dir);

    service::Service svc(cfg);
    const auto request = read_request(request_path, cfg.labels);
    const auto id = svc.submit_job(request);
    const auto job = svc.run_job(id);

    for (const auto& [stage, ref] : job.artifacts) {
        auto it = kExportNames.find(stage);
        if (it == kExportNames.end()) continue;
        write_file_bytes(out_dir / it->second, svc.artifact_store().get(ref));
    }
    write_json_file(out_dir / "job.json", job);
    print_warnings(job.warnings);

    if (job.state != service::JobState::done) {
        std::cerr << "job " << id << " failed";
        if (job.error) std::cerr << " in " << job.error->stage << ": " << job.error->message;
        std::cerr << "\n";
        return 1;
    }
    std::cout << id << " done, final_score " << job.report->final_score << "\n";
    return 0;
}

int cmd_serve(const std::string& config_path) {
    auto cfg = config_or_default(config_path);
    service::Service svc(cfg);
    svc.start();
    httplib::Server server;
    service::register_api_routes(server, svc);
    const int rc = serve_until_signal(server, cfg.host, cfg.port, "decomind");
    svc.stop();
    return rc;
}

int cmd_catalog_build(const std::string& config_path, const fs::path& root, const std::string& store, const fs::path& out,
                      double scene_threshold, bool matting, const std::string& category_map_path) {
    auto cfg = config_or_default(config_path);
    std::map<std::string, std::string> category_map;
    if (!category_map_path.empty()) category_map = read_json_file(category_map_path).get<std::map<std::string, std::string>>();

    Warnings warnings;
    auto index = ingest_catalog(root, store, category_map, &warnings);
    index = flag_scene_images(std::move(index), keyword_scene_detector(), scene_threshold, &warnings);
    if (matting) index = apply_matting(std::move(index), corner_key_matting(), &warnings);
    const auto provider = service::PluginRegistry::with_builtins().make_provider(cfg.provider);
    index = index_embeddings(std::move(index), *provider, &warnings);
    persist_index(index, out);
    print_warnings(warnings);
    std::cout << "indexed " << index.assets.size() << " assets (" << index.usable_count() << " usable) into " << out.string()
              << "\n";
    return 0;
}

int cmd_retrieve(const std::string& config_path, const fs::path& index_path, const fs::path& request_path, const fs::path& out) {
    auto cfg = config_or_default(config_path);
    const auto index = load_index(index_path);
    const auto provider = service::PluginRegistry::with_builtins().make_provider(cfg.provider);
    const auto request = read_request(request_path, cfg.labels);
    write_json_file(out, select_furniture(request, index, *provider));
    return 0;
}

int cmd_layout_render(const std::string& config_path, const fs::path& request_path, const fs::path& selection_path,
                      const fs::path& out, int ppm) {
    auto cfg = config_or_default(config_path);
    const auto request = read_request(request_path, cfg.labels);
    const auto selection = read_json_file(selection_path).get<FurnitureSelection>();
    const auto placed = place_furniture(request, selection, FootprintTable::defaults().merged(cfg.footprints));
    const auto layout = compose_layout(request, placed.placements, ppm > 0 ? ppm : cfg.pixels_per_m);
    save_png(out, layout.image);
    json meta = layout;
    meta["unplaced"] = placed.unplaced;
    fs::path sidecar = out;
    sidecar.replace_extension(".json");
    write_json_file(sidecar, meta);
    print_warnings(placed.warnings);
    for (const auto& u : placed.unplaced) std::cerr << "warning: could not place " << u.asset_id << ": " << u.reason << "\n";
    return 0;
}

int cmd_sidecar(const std::string& host, int port, int delay_ms) {
    auto backend = std::make_shared<StubBackend>(std::chrono::milliseconds(delay_ms));
    httplib::Server server;
    register_sidecar_routes(server, backend);
    return serve_until_signal(server, host, port, "stub sidecar");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DecoMind interior design pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "service config JSON")->check(CLI::ExistingFile);

    auto* serve = app.add_subcommand("serve", "run the REST service");

    auto* run = app.add_subcommand("run", "run one design request to completion");
    std::string run_request, run_index, run_out;
    run->add_option("--request", run_request, "design request JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--index", run_index, "catalog index file (overrides catalog_path)");
    run->add_option("--out", run_out, "output directory")->required();

    auto* catalog = app.add_subcommand("catalog", "catalog tools")->require_subcommand(1);
    auto* build = catalog->add_subcommand("build", "ingest, clean and embed a catalog folder");
    std::string cat_root, cat_store = "ikea", cat_out, cat_map;
    double scene_threshold = kDefaultSceneThreshold;
    bool no_matting = false;
    build->add_option("--root", cat_root, "catalog image folder")->required();
    build->add_option("--store", cat_store, "store label");
    build->add_option("--out", cat_out, "index file to write")->required();
    build->add_option("--scene-threshold", scene_threshold, "scene-image flag threshold");
    build->add_flag("--no-matting", no_matting, "skip background removal");
    build->add_option("--category-map", cat_map, "JSON object folder -> category")->check(CLI::ExistingFile);

    auto* retrieve = app.add_subcommand("retrieve", "select furniture for a request");
    std::string ret_index, ret_request, ret_out;
    retrieve->add_option("--index", ret_index)->required()->check(CLI::ExistingFile);
    retrieve->add_option("--request", ret_request)->required()->check(CLI::ExistingFile);
    retrieve->add_option("--out", ret_out, "selection JSON to write")->required();

    auto* layout = app.add_subcommand("layout", "layout tools")->require_subcommand(1);
    auto* render = layout->add_subcommand("render", "place furniture and draw the control layout");
    std::string lay_request, lay_selection, lay_out;
    int lay_ppm = 0;
    render->add_option("--request", lay_request)->required()->check(CLI::ExistingFile);
    render->add_option("--selection", lay_selection)->required()->check(CLI::ExistingFile);
    render->add_option("--out", lay_out, "PNG to write; metadata goes next to it as .json")->required();
    render->add_option("--pixels-per-m", lay_ppm);

    auto* sidecar = app.add_subcommand("sidecar", "serve the stub generation backend over HTTP");
    std::string side_host = "127.0.0.1";
    int side_port = 8090, side_delay = 0;
    sidecar->add_option("--host", side_host);
    sidecar->add_option("--port", side_port);
    sidecar->add_option("--delay-ms", side_delay);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return cmd_serve(config_path);
        if (*run) return cmd_run(config_path, run_index, run_request, run_out);
        if (*build) return cmd_catalog_build(config_path, cat_root, cat_store, cat_out, scene_threshold, !no_matting, cat_map);
        if (*retrieve) return cmd_retrieve(config_path, ret_index, ret_request, ret_out);
        if (*render) return cmd_layout_render(config_path, lay_request, lay_selection, lay_out, lay_ppm);
        if (*sidecar) return cmd_sidecar(side_host, side_port, side_delay);
    } catch (const service::ValidationRejected& e) {
        std::cerr << "error: invalid request\n";
        for (const auto& issue : e.report().issues) std::cerr << "  " << issue.field << ": " << issue.message << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
