#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "decomind/decomind.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "decomind-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

/// Small product shot: plain backdrop with a colored square in the middle.
inline decomind::Image product_shot(std::uint8_t r, std::uint8_t g, std::uint8_t b, int size = 16) {
    decomind::Image img(size, size, 3, 255);
    for (int y = size / 4; y < size - size / 4; ++y) {
        for (int x = size / 4; x < size - size / 4; ++x) img.set_rgb(x, y, {r, g, b});
    }
    return img;
}

inline void write_shot(const fs::path& file, int salt) {
    fs::create_directories(file.parent_path());
    decomind::save_png(file, product_shot(static_cast<std::uint8_t>(salt * 37), static_cast<std::uint8_t>(salt * 11),
                                          static_cast<std::uint8_t>(200 - salt)));
}

/// `root/train/<category>/<category><i>.png`, `per_category` images each.
inline void write_catalog_tree(const fs::path& root, const std::vector<std::string>& categories, int per_category) {
    int salt = 1;
    for (const auto& c : categories) {
        for (int i = 0; i < per_category; ++i) write_shot(root / "train" / c / (c + std::to_string(i) + ".png"), salt++);
    }
}

/// Builds an embedded index over a fresh fixture tree.
inline decomind::CatalogIndex build_index(const fs::path& root, const std::vector<std::string>& categories, int per_category,
                                          const decomind::EmbeddingProvider& provider) {
    write_catalog_tree(root, categories, per_category);
    auto index = decomind::ingest_catalog(root, "ikea");
    return decomind::index_embeddings(std::move(index), provider);
}

inline decomind::DesignRequest bedroom_request() {
    decomind::DesignRequest r;
    r.room_type = "bedroom";
    r.style = "modern";
    r.room_width_m = 4.0;
    r.room_depth_m = 3.0;
    r.furniture_categories = {"bed", "wardrobe"};
    r.openings = {{decomind::OpeningKind::door, decomind::Wall::north, 2.5, 0.9}};
    r.seed = 7;
    return r;
}

/// Selection with one pick per category, ids "<category>-0".
inline decomind::FurnitureSelection one_each(const std::vector<std::string>& categories) {
    decomind::FurnitureSelection s;
    for (const auto& c : categories) s.picks[c] = {{c + "-0", 1.0}};
    return s;
}

/// Runs a server on an ephemeral port for the lifetime of the object.
class LocalServer {
public:
    LocalServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace testing_support
