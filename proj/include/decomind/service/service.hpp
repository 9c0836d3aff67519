#pragma once

// End-to-end job orchestration: retrieval -> layout -> prompt -> generation
// -> evaluation, one persisted state transition per stage.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "decomind/catalog.hpp"
#include "decomind/evaluation.hpp"
#include "decomind/generation.hpp"
#include "decomind/layout.hpp"
#include "decomind/model.hpp"
#include "decomind/promptgen.hpp"
#include "decomind/retrieval.hpp"
#include "decomind/service/config.hpp"
#include "decomind/service/store.hpp"

namespace decomind::service {

/// submit_job refused the request; carries the full validation report.
class ValidationRejected : public Error {
public:
    explicit ValidationRejected(ValidationReport report)
        : Error("invalid design request: " + report.summary()), report_(std::move(report)) {}
    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

class ServiceNotReady : public Error {
public:
    using Error::Error;
};

struct ArtifactPayload {
    Bytes bytes;
    std::string content_type;
};

/// Seed used when the request leaves it open: derived from the request
/// content so reruns of the same request reproduce.
inline std::uint64_t effective_seed(const DesignRequest& r) {
    if (r.seed) return *r.seed;
    return digest_prefix_u64(sha256(canonical_json(r))) >> 1;
}

/// Stored design record must reference the layout artifact it was
/// generated from.
inline bool design_matches_layout(const json& design_meta, const ArtifactRef& layout) {
    return design_meta.value("layout_hash", std::string{}) == layout.hash;
}

class Service {
public:
    explicit Service(ServiceConfig config, const PluginRegistry& plugins = PluginRegistry::with_builtins())
        : config_(std::move(config)),
          store_(fs::path(config_.data_dir) / "jobs.sqlite3"),
          artifacts_(fs::path(config_.data_dir) / "artifacts"),
          footprints_(FootprintTable::defaults().merged(config_.footprints)) {
        provider_ = plugins.make_provider(config_.provider);
        backend_ = plugins.make_backend(config_.backend);
        auto [room, style] = plugins.make_classifiers(config_.classifiers, config_.labels);
        room_clf_ = std::move(room);
        style_clf_ = std::move(style);
        check_coverage(*room_clf_, config_.labels.room_types);
        check_coverage(*style_clf_, config_.labels.styles);
        if (!config_.catalog_path.empty()) load_catalog(config_.catalog_path);
    }

    ~Service() { stop(); }
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Loads and checks the catalog. Until this succeeds submissions are
    /// refused with ServiceNotReady.
    void load_catalog(const fs::path& file) {
        auto idx = std::make_shared<CatalogIndex>(load_index(file));
        if (idx->provider_id != provider_->provider_id()) {
            throw ConfigurationError("catalog was embedded by '" + idx->provider_id + "' but the configured provider is '" +
                                     provider_->provider_id() + "'");
        }
        std::lock_guard lock(catalog_mu_);
        catalog_ = std::move(idx);
    }

    bool ready() const {
        std::lock_guard lock(catalog_mu_);
        return catalog_ != nullptr;
    }

    /// Starts workers and re-queues jobs left unfinished by a previous run.
    void start() {
        if (running_.exchange(true)) return;
        for (const auto& id : store_.unfinished()) enqueue(id);
        const int n = std::max(1, config_.workers);
        for (int i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        queue_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
    }

    std::string submit_job(const json& request_json) {
        auto result = parse_request(request_json, config_.labels);
        if (auto* rep = std::get_if<ValidationReport>(&result)) throw ValidationRejected(*rep);
        return submit_job(std::get<DesignRequest>(result));
    }

    std::string submit_job(const DesignRequest& request) {
        auto result = validate_request(request, config_.labels);
        if (auto* rep = std::get_if<ValidationReport>(&result)) throw ValidationRejected(*rep);
        auto idx = catalog();
        if (!idx) throw ServiceNotReady("catalog is not loaded");
        if (!labels_equal(idx->store, request.store)) {
            ValidationReport rep;
            rep.add("store", "catalog '" + idx->store + "' is loaded, not '" + request.store + "'");
            throw ValidationRejected(rep);
        }
        DesignJob job;
        job.job_id = new_job_id();
        job.request = request;
        job.state = JobState::queued;
        job.timestamps["queued"] = JobStore::utc_timestamp_ms();
        store_.insert(job);
        if (running_) enqueue(job.job_id);
        return job.job_id;
    }

    DesignJob get_job(const std::string& job_id) const {
        auto job = store_.get(job_id);
        if (!job) throw NotFoundError("unknown job " + job_id);
        return *job;
    }

    JobPage list_jobs(const JobFilter& filter, int page = 1, int page_size = 20) const { return store_.list(filter, page, page_size); }

    /// Artifact bytes exactly as persisted; integrity is re-checked.
    ArtifactPayload get_artifact(const std::string& job_id, const std::string& stage) const {
        const DesignJob job = get_job(job_id);
        auto it = job.artifacts.find(stage);
        if (it == job.artifacts.end()) {
            if (stage_known(stage)) throw NotReadyError("artifact '" + stage + "' of " + job_id + " is not ready");
            throw NotFoundError("no artifact stage '" + stage + "'");
        }
        return {artifacts_.get(it->second), it->second.content_type};
    }

    /// Drives a job through every remaining stage on the calling thread.
    DesignJob run_job(const std::string& job_id) {
        for (;;) {
            DesignJob job = run_stage(job_id);
            if (is_terminal(job.state)) return job;
        }
    }

    /// Executes the stage the job is currently in (at most one transition)
    /// and returns the job afterwards. Stage failures mark the job failed.
    DesignJob run_stage(const std::string& job_id) {
        DesignJob job = get_job(job_id);
        if (is_terminal(job.state)) return job;
        try {
            step(job);  // false means another runner advanced it first
        } catch (const std::exception& e) {
            JobError err;
            err.stage = to_string(job.state);
            err.type = error_type(e);
            err.message = e.what();
            if (auto* ge = dynamic_cast<const GenerationError*>(&e)) err.retry_hint = ge->retry_hint();
            StageUpdate u;
            u.error = err;
            store_.advance(job_id, job.state, JobState::failed, u);
        }
        return get_job(job_id);
    }

    std::vector<std::string> catalog_categories() const {
        auto idx = catalog();
        if (!idx) return {};
        const auto cats = idx->categories();
        return {cats.begin(), cats.end()};
    }

    const LabelConfig& labels() const noexcept { return config_.labels; }
    const ServiceConfig& config() const noexcept { return config_; }
    JobStore& store() noexcept { return store_; }
    const ArtifactStore& artifact_store() const noexcept { return artifacts_; }

    json health() {
        json h{{"ready", ready()}, {"provider", provider_->provider_id()}, {"backend", json(probe_backend(*backend_))}};
        h["classifiers"] = {room_clf_->classifier_id(), style_clf_->classifier_id()};
        auto idx = catalog();
        h["catalog"] = idx ? json{{"store", idx->store}, {"assets", idx->assets.size()}, {"usable", idx->usable_count()}} : json(nullptr);
        return h;
    }

private:
    static bool stage_known(const std::string& s) {
        static const std::set<std::string> known{"selection", "layout", "layout_meta", "prompt", "design", "design_meta", "report"};
        return known.count(s) > 0;
    }

    static std::string error_type(const std::exception& e) {
        if (dynamic_cast<const GenerationError*>(&e)) return "generation_error";
        if (dynamic_cast<const ParameterError*>(&e)) return "parameter_error";
        if (dynamic_cast<const RankingError*>(&e)) return "ranking_error";
        if (dynamic_cast<const CompositionError*>(&e)) return "composition_error";
        if (dynamic_cast<const EvaluationError*>(&e)) return "evaluation_error";
        if (dynamic_cast<const ConfigurationError*>(&e)) return "configuration_error";
        if (dynamic_cast<const RequestError*>(&e)) return "request_error";
        return "error";
    }

    std::shared_ptr<const CatalogIndex> catalog() const {
        std::lock_guard lock(catalog_mu_);
        return catalog_;
    }

    /// Executes the stage for the job's current state and advances it.
    /// Returns false when another runner advanced the job first.
    bool step(const DesignJob& job) {
        const auto& req = job.request;
        switch (job.state) {
            case JobState::queued: return store_.advance(job.job_id, JobState::queued, JobState::retrieving);

            case JobState::retrieving: {
                auto idx = catalog();
                if (!idx) throw ServiceNotReady("catalog is not loaded");
                const FurnitureSelection sel = select_furniture(req, *idx, *provider_);
                StageUpdate u;
                for (const auto& [cat, picks] : sel.picks) {
                    if (picks.empty()) u.warnings.push_back("catalog has no usable '" + cat + "' assets; category left empty");
                }
                u.artifacts["selection"] = artifacts_.put_text(json(sel).dump(2), ".json", "application/json");
                if (!u.warnings.empty()) {
                    u.artifacts["warnings"] = artifacts_.put_text(json(u.warnings).dump(2), ".json", "application/json");
                }
                return store_.advance(job.job_id, JobState::retrieving, JobState::composing, u);
            }

            case JobState::composing: {
                const auto sel = json::parse(artifacts_.get_text(job.artifacts.at("selection"))).get<FurnitureSelection>();
                StageUpdate u;
                PlacementReport placed = place_furniture(req, sel, footprints_);
                const ControlLayout layout = compose_layout(req, placed.placements, config_.pixels_per_m);
                for (const auto& item : placed.unplaced) {
                    u.warnings.push_back("could not place " + item.asset_id + " (" + item.category + "): " + item.reason);
                }
                u.warnings.insert(u.warnings.end(), placed.warnings.begin(), placed.warnings.end());
                json meta = layout;
                meta["unplaced"] = placed.unplaced;
                const PromptBundle prompt = build_prompt(req, sel, config_.negative_prompt, kCurrentPromptTemplate, &u.warnings);
                u.artifacts["layout"] = artifacts_.put(encode_png(layout.image), ".png", "image/png");
                u.artifacts["layout_meta"] = artifacts_.put_text(meta.dump(2), ".json", "application/json");
                u.artifacts["prompt"] = artifacts_.put_text(json(prompt).dump(2), ".json", "application/json");
                return store_.advance(job.job_id, JobState::composing, JobState::generating, u);
            }

            case JobState::generating: {
                const auto prompt = json::parse(artifacts_.get_text(job.artifacts.at("prompt"))).get<PromptBundle>();
                const auto meta = json::parse(artifacts_.get_text(job.artifacts.at("layout_meta")));
                ControlLayout layout;
                layout.image = decode_png(artifacts_.get(job.artifacts.at("layout")));
                layout.pixels_per_m = meta.at("pixels_per_m").get<int>();
                layout.placements = meta.at("placements").get<std::vector<Placement>>();
                GenerationParams params = config_.generation;
                params.seed = effective_seed(req);
                GeneratedDesign design;
                {
                    std::lock_guard lock(backend_mu_);  // one in-flight call per backend
                    design = generate(prompt, layout, params, *backend_, config_.generation_timeout());
                }
                StageUpdate u;
                u.artifacts["design"] = artifacts_.put(encode_png(design.image), ".png", "image/png");
                u.artifacts["design_meta"] = artifacts_.put_text(json(design).dump(2), ".json", "application/json");
                return store_.advance(job.job_id, JobState::generating, JobState::evaluating, u);
            }

            case JobState::evaluating: {
                GeneratedDesign design;
                design.image = decode_png(artifacts_.get(job.artifacts.at("design")));
                const auto meta = json::parse(artifacts_.get_text(job.artifacts.at("design_meta")));
                if (!design_matches_layout(meta, job.artifacts.at("layout"))) {
                    throw Error("design record does not reference the stored layout (layout hash mismatch)");
                }
                EvaluationReport report = score_design(req, design, *room_clf_, *style_clf_, config_.labels);
                StageUpdate u;
                u.report = report;
                u.artifacts["report"] = artifacts_.put_text(json(report).dump(2), ".json", "application/json");
                return store_.advance(job.job_id, JobState::evaluating, JobState::done, u);
            }

            case JobState::done:
            case JobState::failed: return true;
        }
        return true;
    }

    void enqueue(const std::string& id) {
        {
            std::lock_guard lock(queue_mu_);
            if (!queued_.insert(id).second) return;
            queue_.push_back(id);
        }
        queue_cv_.notify_one();
    }

    void worker_loop() {
        while (running_) {
            std::string id;
            {
                std::unique_lock lock(queue_mu_);
                queue_cv_.wait(lock, [&] { return !running_ || !queue_.empty(); });
                if (!running_) return;
                id = queue_.front();
                queue_.pop_front();
            }
            try {
                run_job(id);
            } catch (const std::exception&) {
                // run_job records stage failures itself; anything here is a store error.
            }
            std::lock_guard lock(queue_mu_);
            queued_.erase(id);
        }
    }

    ServiceConfig config_;
    JobStore store_;
    ArtifactStore artifacts_;
    FootprintTable footprints_;

    std::unique_ptr<EmbeddingProvider> provider_;
    std::unique_ptr<GenerationBackend> backend_;
    std::unique_ptr<LabelClassifier> room_clf_;
    std::unique_ptr<LabelClassifier> style_clf_;
    std::mutex backend_mu_;

    mutable std::mutex catalog_mu_;
    std::shared_ptr<const CatalogIndex> catalog_;

    std::atomic<bool> running_{false};
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<std::string> queue_;
    std::set<std::string> queued_;
    std::vector<std::thread> workers_;
};

}  // namespace decomind::service
