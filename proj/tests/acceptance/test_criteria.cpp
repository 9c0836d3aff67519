#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <random>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "../support/fixtures.hpp"

using namespace decomind;
using testing_support::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int run_cli(const std::string& args, const fs::path& log = "/dev/null") {
    const std::string cmd = std::string(DECOMIND_CLI) + " " + args + " >" + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const std::vector<std::string> kRoomLabels{"bedroom", "living_room", "kitchen", "dining_room"};
const std::vector<std::string> kStyleLabels{"modern", "classic", "minimalist"};

}  // namespace

// ---------------------------------------------------------------------------
// Score rows: (room match, style match) -> final score, exact.

TEST(Criteria, score_rows) {
    const auto t0 = Clock::now();
    DesignRequest req = testing_support::bedroom_request();  // bedroom / modern
    GeneratedDesign design;
    design.image = Image(16, 16, 3, 100);

    struct Row {
        bool room;
        bool style;
        double score;
    };
    // Five evaluated designs plus the both-match case.
    const std::vector<Row> rows{{true, false, 0.50}, {true, false, 0.50}, {true, false, 0.50},
                                {false, false, 0.00}, {false, false, 0.00}, {true, true, 1.00}};
    for (const auto& row : rows) {
        const auto room = FixedClassifier::one_hot("room", kRoomLabels, row.room ? "bedroom" : "kitchen");
        const auto style = FixedClassifier::one_hot("style", kStyleLabels, row.style ? "modern" : "classic");
        const auto rep = score_design(req, design, room, style);
        EXPECT_EQ(rep.room_type_match, row.room);
        EXPECT_EQ(rep.style_match, row.style);
        EXPECT_EQ(rep.final_score, row.score);
    }
    EXPECT_LT(seconds_since(t0), 1.0);
}

// ---------------------------------------------------------------------------
// Retrieval against an exhaustive oracle.

namespace {

std::vector<ScoredAsset> exhaustive_top_k(const EmbeddingVector& q, const CatalogIndex& index, const std::string& category,
                                          std::size_t k) {
    struct Cand {
        double score;
        std::string id;
    };
    std::vector<Cand> all;
    for (const auto& a : index.assets) {
        if (a.excluded || a.category != category) continue;
        const auto& v = index.embeddings.at(a.asset_id).values;
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += static_cast<double>(q.values[i]) * static_cast<double>(v[i]);
        all.push_back({s, a.asset_id});
    }
    std::sort(all.begin(), all.end(), [](const Cand& a, const Cand& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; });
    std::vector<ScoredAsset> out;
    for (std::size_t i = 0; i < all.size() && i < k; ++i) out.push_back({all[i].id, all[i].score});
    return out;
}

}  // namespace

TEST(Criteria, retrieval_oracle) {
    TempDir tmp;
    const std::vector<std::string> cats{"bed", "sofa", "table", "wardrobe"};
    // 200 images; every 10th reuses an earlier picture so identical vectors
    // force the tie-break rule.
    for (int i = 0; i < 200; ++i) {
        const auto& c = cats[static_cast<std::size_t>(i) % cats.size()];
        const int salt = (i % 10 == 9) ? i - 8 : i;
        fs::create_directories(tmp / c);
        save_png(tmp / c / ("item" + std::to_string(1000 + i) + ".png"),
                 testing_support::product_shot(static_cast<std::uint8_t>(salt), static_cast<std::uint8_t>(salt * 7),
                                               static_cast<std::uint8_t>(salt * 13), 8));
    }
    const auto t0 = Clock::now();
    StubEmbeddingProvider provider(64, 0);
    const auto index = index_embeddings(ingest_catalog(tmp.path(), "ikea"), provider);
    ASSERT_EQ(index.embeddings.size(), 200u);

    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> pick(0, 199);
    int compared = 0;
    for (int q = 0; q < 100; ++q) {
        // Half the queries are text embeddings, half are copies of catalog vectors (exact ties).
        EmbeddingVector query = q % 2 == 0 ? provider.embed_text("query " + std::to_string(rng()))
                                           : index.embeddings.at(index.assets[static_cast<std::size_t>(pick(rng))].asset_id);
        const auto& category = cats[static_cast<std::size_t>(q) % cats.size()];
        for (std::size_t k : {1u, 5u, 20u}) {
            ASSERT_EQ(rank_assets(query, index, category, k), exhaustive_top_k(query, index, category, k))
                << "query " << q << " k " << k;
            ++compared;
        }
    }
    EXPECT_EQ(compared, 300);
    EXPECT_LT(seconds_since(t0), 10.0);
}

// ---------------------------------------------------------------------------
// Layout determinism and geometry over a fixed room corpus.

namespace {

std::vector<DesignRequest> layout_corpus() {
    const std::vector<std::pair<double, double>> sizes{{2, 2},   {3, 2.5}, {4, 3}, {3.5, 3.5}, {5, 4},
                                                       {6, 3},   {4.5, 5}, {7, 5}, {8, 6},     {2.5, 4}};
    const std::vector<Opening> openings{{OpeningKind::door, Wall::north, 0.2, 0.8},
                                        {OpeningKind::window, Wall::east, 0.3, 0.6},
                                        {OpeningKind::door, Wall::south, 0.5, 0.9},
                                        {OpeningKind::window, Wall::west, 0.4, 0.5}};
    const std::vector<std::string> cats{"bed", "wardrobe", "sofa", "chair", "desk"};
    std::vector<DesignRequest> out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        DesignRequest r;
        r.room_type = kRoomLabels[i % kRoomLabels.size()];
        r.style = kStyleLabels[i % kStyleLabels.size()];
        r.room_width_m = sizes[i].first;
        r.room_depth_m = sizes[i].second;
        r.openings.assign(openings.begin(), openings.begin() + static_cast<std::ptrdiff_t>(i % 5));
        r.furniture_categories.assign(cats.begin(), cats.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, i % 6)));
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(Criteria, layout_determinism) {
    TempDir tmp;
    const auto corpus = layout_corpus();
    std::set<std::size_t> opening_counts, item_counts;
    double total_s = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& r = corpus[i];
        ASSERT_TRUE(std::holds_alternative<DesignRequest>(validate_request(r)));
        opening_counts.insert(r.openings.size());
        // The first room keeps an empty selection, as when retrieval finds nothing.
        const auto sel = i == 0 ? FurnitureSelection{} : testing_support::one_each(r.furniture_categories);
        item_counts.insert(sel.picks.size());

        const auto t0 = Clock::now();
        const auto placed = place_furniture(r, sel).placements;
        const auto a = compose_layout(r, placed, 100);
        const auto b = compose_layout(r, placed, 100);
        const Bytes png_a = encode_png(a.image);
        total_s += seconds_since(t0);
        EXPECT_EQ(png_a, encode_png(b.image)) << "room " << i;

        // Dimensions.
        EXPECT_EQ(a.image.width, std::lround(r.room_width_m * a.pixels_per_m));
        EXPECT_EQ(a.image.height, std::lround(r.room_depth_m * a.pixels_per_m));

        // Footprint masks rasterized independently from pixel centres.
        std::vector<int> cover(static_cast<std::size_t>(a.image.width * a.image.height), 0);
        const double ppm = a.pixels_per_m;
        for (const auto& p : placed) {
            for (int y = 0; y < a.image.height; ++y) {
                for (int x = 0; x < a.image.width; ++x) {
                    const double cx = (x + 0.5) / ppm, cy = (y + 0.5) / ppm;
                    if (cx >= p.x_m && cx < p.x_m + p.w_m && cy >= p.y_m && cy < p.y_m + p.d_m) {
                        ++cover[static_cast<std::size_t>(y * a.image.width + x)];
                    }
                }
            }
        }
        EXPECT_EQ(std::count_if(cover.begin(), cover.end(), [](int c) { return c > 1; }), 0) << "room " << i;

        // A second, independent process must produce the same bytes.
        const auto dir = tmp / ("room" + std::to_string(i));
        fs::create_directories(dir);
        std::ofstream(dir / "request.json") << json(r).dump();
        std::ofstream(dir / "selection.json") << json(sel).dump();
        ASSERT_EQ(run_cli("layout render --request " + (dir / "request.json").string() + " --selection " +
                          (dir / "selection.json").string() + " --pixels-per-m 100 --out " + (dir / "layout.png").string()),
                  0);
        EXPECT_EQ(read_file_bytes(dir / "layout.png"), png_a) << "room " << i;
    }
    EXPECT_EQ(opening_counts, (std::set<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(*item_counts.begin(), 0u);
    EXPECT_EQ(*item_counts.rbegin(), 5u);
    EXPECT_LT(total_s, 10.0);
}

// ---------------------------------------------------------------------------
// Placement validity under randomized requests.

namespace {

bool inside(const DesignRequest& r, const Placement& p) {
    const double eps = 1e-9;
    return p.w_m > 0 && p.d_m > 0 && p.x_m >= -eps && p.y_m >= -eps && p.x_m + p.w_m <= r.room_width_m + eps &&
           p.y_m + p.d_m <= r.room_depth_m + eps;
}

double intersection_area(const Placement& a, const Placement& b) {
    const double w = std::min(a.x_m + a.w_m, b.x_m + b.w_m) - std::max(a.x_m, b.x_m);
    const double h = std::min(a.y_m + a.d_m, b.y_m + b.d_m) - std::max(a.y_m, b.y_m);
    // Shared edges can leave rounding-level overlap; anything under 1e-9 m counts as touching.
    return (w > 1e-9 && h > 1e-9) ? w * h : 0.0;
}

}  // namespace

TEST(Criteria, placement_validity) {
    const auto t0 = Clock::now();
    std::mt19937 rng(77);
    const auto table = FootprintTable::defaults();
    const std::vector<std::string> cats{"bed", "sofa", "table", "wardrobe", "chair", "armchair", "desk", "dining_table",
                                        "coffee_table", "nightstand", "bookshelf", "dresser", "tv_stand", "cabinet", "lamp",
                                        "kitchen_island", "aquarium"};
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto coin = [&](int n) { return std::uniform_int_distribution<int>(0, n)(rng); };

    int pigeonhole_cases = 0;
    for (int trial = 0; trial < 500; ++trial) {
        DesignRequest r;
        r.room_type = "bedroom";
        r.style = "modern";
        const bool tiny = trial % 5 == 0;  // every fifth room is forced to overflow
        r.room_width_m = std::round((tiny ? uni(1.2, 2.2) : uni(1.5, 8.0)) * 10) / 10;
        r.room_depth_m = std::round((tiny ? uni(1.2, 2.2) : uni(1.5, 6.0)) * 10) / 10;
        r.items_per_category = 1 + coin(1);
        std::vector<std::string> pool = cats;
        std::shuffle(pool.begin(), pool.end(), rng);
        const int n = tiny ? 4 + coin(2) : 1 + coin(5);
        r.furniture_categories.assign(pool.begin(), pool.begin() + n);
        for (int o = coin(4); o > 0; --o) {
            Opening op;
            op.kind = coin(1) ? OpeningKind::door : OpeningKind::window;
            op.wall = kWallsCcw[static_cast<std::size_t>(coin(3))];
            const double len = wall_length(r, op.wall);
            op.width_m = std::min(len, op.kind == OpeningKind::door ? uni(0.6, 1.2) : uni(0.3, 1.5));
            if (op.width_m < (op.kind == OpeningKind::door ? kMinDoorWidth : kMinWindowWidth)) continue;
            op.offset_m = std::floor(uni(0.0, len - op.width_m) * 100) / 100;
            r.openings.push_back(op);
        }
        ASSERT_TRUE(std::holds_alternative<DesignRequest>(validate_request(r))) << json(r).dump();

        FurnitureSelection sel;
        double area = 0.0;
        std::size_t items = 0;
        for (const auto& c : r.furniture_categories) {
            for (int k = 0; k < r.items_per_category; ++k) {
                sel.picks[c].push_back({c + "-" + std::to_string(k), 1.0});
                const auto f = default_footprint(c, table);
                area += f.w_m * f.d_m;
                ++items;
            }
        }
        const auto rep = place_furniture(r, sel, table);
        EXPECT_EQ(rep.placements.size() + rep.unplaced.size(), items) << json(r).dump();
        for (std::size_t i = 0; i < rep.placements.size(); ++i) {
            EXPECT_TRUE(inside(r, rep.placements[i])) << json(r).dump();
            for (std::size_t j = i + 1; j < rep.placements.size(); ++j) {
                EXPECT_EQ(intersection_area(rep.placements[i], rep.placements[j]), 0.0) << json(r).dump();
            }
        }
        if (area > r.room_width_m * r.room_depth_m) {
            ++pigeonhole_cases;
            EXPECT_GE(rep.unplaced.size(), 1u) << json(r).dump();
        }
    }
    EXPECT_GE(pigeonhole_cases, 50);
    EXPECT_LT(seconds_since(t0), 30.0);
}

// ---------------------------------------------------------------------------
// End-to-end run through the command line with stub plug-ins.

TEST(Criteria, end_to_end_stub) {
    TempDir tmp;
    testing_support::write_catalog_tree(tmp / "catalog", {"bed", "wardrobe", "nightstand"}, 4);
    ASSERT_EQ(run_cli("catalog build --root " + (tmp / "catalog").string() + " --store ikea --out " + (tmp / "index.bin").string()), 0);
    const auto req = testing_support::bedroom_request();
    std::ofstream(tmp / "request.json") << json(req).dump();

    const auto t0 = Clock::now();
    const int rc = run_cli("run --request " + (tmp / "request.json").string() + " --index " + (tmp / "index.bin").string() +
                               " --out " + (tmp / "out").string(),
                           tmp / "run.log");
    const double elapsed = seconds_since(t0);
    ASSERT_EQ(rc, 0) << std::ifstream(tmp / "run.log").rdbuf();

    const auto job = json::parse(std::ifstream(tmp / "out/job.json"));
    EXPECT_EQ(job.at("state"), "done");
    for (const char* a : {"selection", "layout", "prompt", "design", "report"}) EXPECT_TRUE(job.at("artifacts").contains(a)) << a;
    for (const char* f : {"selection.json", "layout.png", "prompt.json", "design.png", "report.json"}) {
        EXPECT_TRUE(fs::exists(tmp / "out" / f)) << f;
    }

    const auto prompt = json::parse(std::ifstream(tmp / "out/prompt.json")).get<PromptBundle>();
    const auto design = load_image(tmp / "out/design.png");
    const auto stamp = decode_prompt_stamp(design);
    ASSERT_TRUE(stamp.has_value());
    EXPECT_EQ(*stamp, sha256(canonical_json(prompt)));

    const auto report = json::parse(std::ifstream(tmp / "out/report.json")).get<EvaluationReport>();
    const double recomputed = 0.5 * (labels_equal(report.predicted_room_type, req.room_type) ? 1 : 0) +
                              0.5 * (labels_equal(report.predicted_style, req.style) ? 1 : 0);
    EXPECT_EQ(recomputed, report.final_score);
    EXPECT_LT(elapsed, 5.0);
}

// ---------------------------------------------------------------------------
// Catalog persistence at 1,000 assets.

TEST(Criteria, catalog_round_trip) {
    TempDir tmp;
    const auto t0 = Clock::now();
    StubEmbeddingProvider provider(64, 3);
    CatalogIndex index;
    index.store = "ikea";
    index.root_path = "/data/ikea";
    index.created_at = "2026-01-01T00:00:00Z";
    index.provider_id = provider.provider_id();
    const std::vector<std::string> cats{"bed", "sofa", "table", "wardrobe", "chair"};
    for (int i = 0; i < 1000; ++i) {
        FurnitureAsset a;
        a.asset_id = "train_" + cats[static_cast<std::size_t>(i) % cats.size()] + "_" + std::to_string(i) + ".png";
        a.category = cats[static_cast<std::size_t>(i) % cats.size()];
        a.image_path = "train/" + a.category + "/" + std::to_string(i) + ".png";
        a.has_alpha = i % 3 == 0;
        a.source_split = static_cast<SourceSplit>(i % 3);
        if (i % 17 == 0) a.exclude(i % 2 ? ExclusionReason::scene_image : ExclusionReason::low_quality);
        if (!a.excluded) index.embeddings[a.asset_id] = provider.embed_text(a.asset_id);
        index.assets.push_back(a);
    }
    persist_index(index, tmp / "big.bin");
    const auto back = load_index(tmp / "big.bin");
    EXPECT_EQ(back.store, index.store);
    EXPECT_EQ(back.root_path, index.root_path);
    EXPECT_EQ(back.created_at, index.created_at);
    EXPECT_EQ(back.provider_id, index.provider_id);
    EXPECT_EQ(back.assets, index.assets);
    EXPECT_EQ(back.embeddings, index.embeddings);
    for (const auto& [id, e] : back.embeddings) {
        double s = 0;
        for (float v : e.values) s += double(v) * double(v);
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6) << id;
    }
    EXPECT_LT(seconds_since(t0), 10.0);
}

// ---------------------------------------------------------------------------
// Crash recovery: SIGKILL the server while a job is generating.

namespace {

struct ServerProcess {
    pid_t pid = -1;
    int port = 0;

    static ServerProcess start(const fs::path& config, const fs::path& log) {
        ServerProcess p;
        p.pid = ::fork();
        if (p.pid == 0) {
            const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::execl(DECOMIND_CLI, DECOMIND_CLI, "serve", "--config", config.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        const auto deadline = Clock::now() + std::chrono::seconds(10);
        while (Clock::now() < deadline && p.port == 0) {
            std::ifstream in(log);
            std::string line;
            while (std::getline(in, line)) {
                const auto at = line.find("listening on 127.0.0.1:");
                if (at != std::string::npos) p.port = std::stoi(line.substr(at + 23));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        return p;
    }

    void kill_hard() {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
        pid = -1;
    }

    void stop() {
        if (pid <= 0) return;
        ::kill(pid, SIGTERM);
        ::waitpid(pid, nullptr, 0);
        pid = -1;
    }

    ~ServerProcess() { stop(); }
};

json poll_job(httplib::Client& cli, const std::string& id, const std::function<bool(const json&)>& until, double timeout_s) {
    const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
    json job;
    while (Clock::now() < deadline) {
        if (auto res = cli.Get("/api/jobs/" + id); res && res->status == 200) {
            job = json::parse(res->body);
            if (until(job)) return job;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    return job;
}

}  // namespace

TEST(Criteria, crash_recovery) {
    TempDir tmp;
    StubEmbeddingProvider provider(64, 0);
    persist_index(testing_support::build_index(tmp / "catalog", {"bed", "wardrobe"}, 3, provider), tmp / "index.bin");
    const json cfg{{"catalog_path", "index.bin"},
                   {"data_dir", "data"},
                   {"port", 0},
                   {"workers", 1},
                   {"generation", {{"output_size", {64, 64}}}},
                   {"backend", {{"type", "stub"}, {"stub_delay_ms", 1500}}}};
    std::ofstream(tmp / "config.json") << cfg.dump();

    std::string id;
    {
        auto server = ServerProcess::start(tmp / "config.json", tmp / "serve1.log");
        ASSERT_GT(server.port, 0) << std::ifstream(tmp / "serve1.log").rdbuf();
        httplib::Client cli("127.0.0.1", server.port);
        auto res = cli.Post("/api/jobs", json(testing_support::bedroom_request()).dump(), "application/json");
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 202);
        id = json::parse(res->body).at("job_id");
        const auto job = poll_job(cli, id, [](const json& j) { return j.at("state") == "generating"; }, 10);
        ASSERT_EQ(job.at("state"), "generating");
        server.kill_hard();
    }

    {
        service::JobStore store(tmp / "data/jobs.sqlite3");
        ASSERT_EQ(store.get(id)->state, service::JobState::generating);
    }

    auto server = ServerProcess::start(tmp / "config.json", tmp / "serve2.log");
    ASSERT_GT(server.port, 0);
    httplib::Client cli("127.0.0.1", server.port);
    const auto job = poll_job(
        cli, id, [](const json& j) { return j.at("state") == "done" || j.at("state") == "failed"; }, 20);
    EXPECT_EQ(job.at("state"), "done");
    server.stop();

    service::JobStore store(tmp / "data/jobs.sqlite3");
    EXPECT_EQ(store.count_jobs(), 1);
    EXPECT_EQ(store.transitions_into(id, service::JobState::done), 1);
    EXPECT_EQ(store.transitions_into(id, service::JobState::failed), 0);
    EXPECT_EQ(store.list({service::JobState::done, {}, {}}, 1, 50).total, 1);
}
