#pragma once

// Job metadata in a single-file SQLite database plus a content-addressed
// artifact directory.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <sqlite3.h>
#include <unistd.h>

#include "decomind/catalog.hpp"
#include "decomind/errors.hpp"
#include "decomind/hash.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"

namespace decomind::service {

namespace fs = std::filesystem;

enum class JobState { queued, retrieving, composing, generating, evaluating, done, failed };
NLOHMANN_JSON_SERIALIZE_ENUM(JobState, {{JobState::queued, "queued"},
                                        {JobState::retrieving, "retrieving"},
                                        {JobState::composing, "composing"},
                                        {JobState::generating, "generating"},
                                        {JobState::evaluating, "evaluating"},
                                        {JobState::done, "done"},
                                        {JobState::failed, "failed"}})

inline std::string to_string(JobState s) { return json(s).get<std::string>(); }

inline std::optional<JobState> parse_state(const std::string& s) {
    for (auto st : {JobState::queued, JobState::retrieving, JobState::composing, JobState::generating, JobState::evaluating,
                    JobState::done, JobState::failed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

inline bool is_terminal(JobState s) { return s == JobState::done || s == JobState::failed; }

/// Legal transitions: one step forward along the pipeline, or to failed
/// from any non-terminal state.
inline bool can_transition(JobState from, JobState to) {
    if (is_terminal(from)) return false;
    if (to == JobState::failed) return true;
    return static_cast<int>(to) == static_cast<int>(from) + 1;
}

/// Artifacts a job must carry before it may reach done.
inline const std::vector<std::string> kRequiredArtifacts{"selection", "layout", "prompt", "design", "report"};

struct ArtifactRef {
    std::string hash;
    std::string file;
    std::size_t size = 0;
    std::string content_type;

    friend bool operator==(const ArtifactRef&, const ArtifactRef&) = default;
};

inline void to_json(json& j, const ArtifactRef& a) {
    j = json{{"hash", a.hash}, {"file", a.file}, {"size", a.size}, {"content_type", a.content_type}};
}
inline void from_json(const json& j, ArtifactRef& a) {
    j.at("hash").get_to(a.hash);
    j.at("file").get_to(a.file);
    j.at("size").get_to(a.size);
    j.at("content_type").get_to(a.content_type);
}

struct JobError {
    std::string stage;
    std::string type;
    std::string message;
    std::string retry_hint;

    friend bool operator==(const JobError&, const JobError&) = default;
};

inline void to_json(json& j, const JobError& e) {
    j = json{{"stage", e.stage}, {"type", e.type}, {"message", e.message}, {"retry_hint", e.retry_hint}};
}
inline void from_json(const json& j, JobError& e) {
    e.stage = j.value("stage", std::string{});
    e.type = j.value("type", std::string{});
    e.message = j.value("message", std::string{});
    e.retry_hint = j.value("retry_hint", std::string{});
}

struct DesignJob {
    std::string job_id;
    DesignRequest request;
    JobState state = JobState::queued;
    std::map<std::string, ArtifactRef> artifacts;
    std::optional<EvaluationReport> report;
    std::optional<JobError> error;
    std::map<std::string, std::string> timestamps;
    std::vector<std::string> warnings;
};

inline void to_json(json& j, const DesignJob& d) {
    j = json{{"job_id", d.job_id},
             {"request", d.request},
             {"state", d.state},
             {"artifacts", d.artifacts},
             {"report", d.report ? json(*d.report) : json(nullptr)},
             {"error", d.error ? json(*d.error) : json(nullptr)},
             {"timestamps", d.timestamps},
             {"warnings", d.warnings}};
}

/// Content-addressed files: `<dir>/<sha256><ext>`, written atomically.
class ArtifactStore {
public:
    explicit ArtifactStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    ArtifactRef put(std::span<const std::uint8_t> bytes, const std::string& ext, const std::string& content_type) {
        ArtifactRef ref;
        ref.hash = sha256_hex(bytes);
        ref.file = ref.hash + ext;
        ref.size = bytes.size();
        ref.content_type = content_type;
        const fs::path target = dir_ / ref.file;
        std::error_code ec;
        if (!fs::exists(target, ec)) {
            const fs::path tmp = dir_ / (ref.file + ".tmp." + unique_suffix());
            write_file_bytes(tmp, bytes);
            fs::rename(tmp, target);
        }
        return ref;
    }

    ArtifactRef put_text(const std::string& text, const std::string& ext, const std::string& content_type) {
        return put(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), ext, content_type);
    }

    /// Re-hashes on read; a mismatch means the file was altered after write.
    Bytes get(const ArtifactRef& ref) const {
        const fs::path p = dir_ / ref.file;
        std::error_code ec;
        if (!fs::exists(p, ec)) throw NotFoundError("artifact file missing: " + ref.file);
        Bytes bytes = read_file_bytes(p);
        if (sha256_hex(bytes) != ref.hash) throw Error("artifact " + ref.file + " failed its integrity check");
        return bytes;
    }

    std::string get_text(const ArtifactRef& ref) const {
        const Bytes b = get(ref);
        return std::string(b.begin(), b.end());
    }

    const fs::path& dir() const noexcept { return dir_; }

private:
    static std::string unique_suffix() {
        static std::atomic<unsigned long> counter{0};
        return std::to_string(::getpid()) + "." + std::to_string(counter++);
    }

    fs::path dir_;
};

struct JobFilter {
    std::optional<JobState> state;
    std::optional<std::string> room_type;
    std::optional<std::string> style;
};

struct JobPage {
    std::vector<DesignJob> jobs;
    int page = 1;
    int page_size = 20;
    long total = 0;
};

inline void to_json(json& j, const JobPage& p) {
    j = json{{"jobs", p.jobs}, {"page", p.page}, {"page_size", p.page_size}, {"total", p.total}};
}

/// Fields written together with a state transition.
struct StageUpdate {
    std::map<std::string, ArtifactRef> artifacts;
    std::optional<EvaluationReport> report;
    std::optional<JobError> error;
    std::vector<std::string> warnings;
};

/// SQLite-backed job table. All access goes through one connection guarded
/// by a mutex; every transition is a single transaction.
class JobStore {
public:
    explicit JobStore(const fs::path& db_path) {
        if (db_path.has_parent_path()) fs::create_directories(db_path.parent_path());
        if (sqlite3_open_v2(db_path.string().c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                            nullptr) != SQLITE_OK) {
            std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
            sqlite3_close(db_);
            throw ConfigurationError("cannot open job store " + db_path.string() + ": " + msg);
        }
        sqlite3_busy_timeout(db_, 5000);
        exec("PRAGMA synchronous=FULL");
        exec(R"(CREATE TABLE IF NOT EXISTS jobs (
                    job_id TEXT PRIMARY KEY,
                    seq INTEGER NOT NULL,
                    state TEXT NOT NULL,
                    room_type TEXT NOT NULL,
                    style TEXT NOT NULL,
                    request TEXT NOT NULL,
                    artifacts TEXT NOT NULL,
                    report TEXT,
                    error TEXT,
                    timestamps TEXT NOT NULL,
                    warnings TEXT NOT NULL))");
        exec(R"(CREATE TABLE IF NOT EXISTS transitions (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    job_id TEXT NOT NULL,
                    from_state TEXT,
                    to_state TEXT NOT NULL,
                    at TEXT NOT NULL))");
    }

    ~JobStore() { sqlite3_close(db_); }
    JobStore(const JobStore&) = delete;
    JobStore& operator=(const JobStore&) = delete;

    void insert(const DesignJob& job) {
        std::lock_guard lock(mu_);
        Tx tx(*this);
        Stmt seq(db_, "SELECT COALESCE(MAX(seq), 0) + 1 FROM jobs");
        seq.step();
        const auto next = sqlite3_column_int64(seq.s, 0);
        Stmt ins(db_,
                 "INSERT INTO jobs (job_id, seq, state, room_type, style, request, artifacts, report, error, timestamps, warnings) "
                 "VALUES (?, ?, ?, ?, ?, ?, ?, NULL, NULL, ?, ?)");
        ins.bind(1, job.job_id);
        sqlite3_bind_int64(ins.s, 2, next);
        ins.bind(3, to_string(job.state));
        ins.bind(4, normalize_label(job.request.room_type));
        ins.bind(5, normalize_label(job.request.style));
        ins.bind(6, json(job.request).dump());
        ins.bind(7, json(job.artifacts).dump());
        ins.bind(8, json(job.timestamps).dump());
        ins.bind(9, json(job.warnings).dump());
        ins.step();
        log_transition(job.job_id, std::nullopt, job.state);
        tx.commit();
    }

    std::optional<DesignJob> get(const std::string& job_id) const {
        std::lock_guard lock(mu_);
        Stmt q(db_, "SELECT " + std::string(kColumns) + " FROM jobs WHERE job_id = ?");
        q.bind(1, job_id);
        if (!q.step()) return std::nullopt;
        return row(q);
    }

    JobPage list(const JobFilter& f, int page, int page_size) const {
        std::lock_guard lock(mu_);
        JobPage out;
        out.page = std::max(page, 1);
        out.page_size = std::clamp(page_size, 1, 200);
        const std::string where = " WHERE (?1 IS NULL OR state = ?1) AND (?2 IS NULL OR room_type = ?2) AND (?3 IS NULL OR style = ?3)";
        auto bind_filter = [&](Stmt& s) {
            if (f.state) s.bind(1, to_string(*f.state));
            if (f.room_type) s.bind(2, normalize_label(*f.room_type));
            if (f.style) s.bind(3, normalize_label(*f.style));
        };
        Stmt count(db_, "SELECT COUNT(*) FROM jobs" + where);
        bind_filter(count);
        count.step();
        out.total = sqlite3_column_int64(count.s, 0);
        Stmt q(db_, "SELECT " + std::string(kColumns) + " FROM jobs" + where + " ORDER BY seq DESC LIMIT ?4 OFFSET ?5");
        bind_filter(q);
        sqlite3_bind_int(q.s, 4, out.page_size);
        sqlite3_bind_int(q.s, 5, (out.page - 1) * out.page_size);
        while (q.step()) out.jobs.push_back(row(q));
        return out;
    }

    /// Non-terminal jobs in submission order.
    std::vector<std::string> unfinished() const {
        std::lock_guard lock(mu_);
        Stmt q(db_, "SELECT job_id FROM jobs WHERE state NOT IN ('done', 'failed') ORDER BY seq ASC");
        std::vector<std::string> ids;
        while (q.step()) ids.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(q.s, 0)));
        return ids;
    }

    /// Moves `job_id` from `from` to `to` and records `update`, atomically.
    /// Returns false (and changes nothing) when the job is no longer in
    /// `from`, so a transition can never be applied twice.
    bool advance(const std::string& job_id, JobState from, JobState to, const StageUpdate& update = {}) {
        if (!can_transition(from, to)) throw Error("illegal transition " + to_string(from) + " -> " + to_string(to));
        std::lock_guard lock(mu_);
        Tx tx(*this);
        Stmt q(db_, "SELECT " + std::string(kColumns) + " FROM jobs WHERE job_id = ?");
        q.bind(1, job_id);
        if (!q.step()) throw NotFoundError("unknown job " + job_id);
        DesignJob job = row(q);
        q.reset();
        if (job.state != from) return false;

        for (const auto& [name, ref] : update.artifacts) {
            auto [it, inserted] = job.artifacts.emplace(name, ref);
            if (!inserted && !(it->second == ref)) throw Error("artifact '" + name + "' of job " + job_id + " is immutable");
        }
        if (to == JobState::done) {
            for (const auto& name : kRequiredArtifacts) {
                if (!job.artifacts.count(name)) throw Error("job " + job_id + " cannot finish without artifact '" + name + "'");
            }
        }
        if (update.report) job.report = update.report;
        if (update.error) job.error = update.error;
        job.warnings.insert(job.warnings.end(), update.warnings.begin(), update.warnings.end());
        job.timestamps[to_string(to)] = utc_timestamp_ms();

        Stmt u(db_,
               "UPDATE jobs SET state = ?, artifacts = ?, report = ?, error = ?, timestamps = ?, warnings = ? "
               "WHERE job_id = ? AND state = ?");
        u.bind(1, to_string(to));
        u.bind(2, json(job.artifacts).dump());
        if (job.report) u.bind(3, json(*job.report).dump());
        if (job.error) u.bind(4, json(*job.error).dump());
        u.bind(5, json(job.timestamps).dump());
        u.bind(6, json(job.warnings).dump());
        u.bind(7, job_id);
        u.bind(8, to_string(from));
        u.step();
        if (sqlite3_changes(db_) != 1) return false;
        log_transition(job_id, from, to);
        tx.commit();
        return true;
    }

    /// Number of recorded transitions of `job_id` into `to`.
    long transitions_into(const std::string& job_id, JobState to) const {
        std::lock_guard lock(mu_);
        Stmt q(db_, "SELECT COUNT(*) FROM transitions WHERE job_id = ? AND to_state = ?");
        q.bind(1, job_id);
        q.bind(2, to_string(to));
        q.step();
        return sqlite3_column_int64(q.s, 0);
    }

    long count_jobs() const {
        std::lock_guard lock(mu_);
        Stmt q(db_, "SELECT COUNT(*) FROM jobs");
        q.step();
        return sqlite3_column_int64(q.s, 0);
    }

    static std::string utc_timestamp_ms() {
        const auto now = std::chrono::system_clock::now();
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
        std::string s = utc_timestamp();
        char buf[8];
        std::snprintf(buf, sizeof buf, ".%03dZ", static_cast<int>(ms));
        s.pop_back();
        return s + buf;
    }

private:
    static constexpr const char* kColumns = "job_id, state, request, artifacts, report, error, timestamps, warnings";

    struct Stmt {
        sqlite3* db;
        sqlite3_stmt* s = nullptr;

        Stmt(sqlite3* d, const std::string& sql) : db(d) {
            if (sqlite3_prepare_v2(db, sql.c_str(), -1, &s, nullptr) != SQLITE_OK) {
                throw Error(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
            }
        }
        ~Stmt() { sqlite3_finalize(s); }
        Stmt(const Stmt&) = delete;
        Stmt& operator=(const Stmt&) = delete;

        void bind(int i, const std::string& v) { sqlite3_bind_text(s, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT); }
        bool step() {
            const int rc = sqlite3_step(s);
            if (rc == SQLITE_ROW) return true;
            if (rc == SQLITE_DONE) return false;
            throw Error(std::string("sqlite step failed: ") + sqlite3_errmsg(db));
        }
        void reset() { sqlite3_reset(s); }
        std::string text(int col) const {
            const auto* t = sqlite3_column_text(s, col);
            return t ? reinterpret_cast<const char*>(t) : std::string{};
        }
        bool is_null(int col) const { return sqlite3_column_type(s, col) == SQLITE_NULL; }
    };

    struct Tx {
        JobStore& store;
        bool done = false;
        explicit Tx(JobStore& st) : store(st) { store.exec("BEGIN IMMEDIATE"); }
        void commit() {
            store.exec("COMMIT");
            done = true;
        }
        ~Tx() {
            if (!done) sqlite3_exec(store.db_, "ROLLBACK", nullptr, nullptr, nullptr);
        }
    };

    void exec(const std::string& sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw Error("sqlite: " + msg);
        }
    }

    static DesignJob row(const Stmt& q) {
        DesignJob j;
        j.job_id = q.text(0);
        j.state = parse_state(q.text(1)).value_or(JobState::failed);
        j.request = json::parse(q.text(2)).get<DesignRequest>();
        j.artifacts = json::parse(q.text(3)).get<std::map<std::string, ArtifactRef>>();
        if (!q.is_null(4)) j.report = json::parse(q.text(4)).get<EvaluationReport>();
        if (!q.is_null(5)) j.error = json::parse(q.text(5)).get<JobError>();
        j.timestamps = json::parse(q.text(6)).get<std::map<std::string, std::string>>();
        j.warnings = json::parse(q.text(7)).get<std::vector<std::string>>();
        return j;
    }

    void log_transition(const std::string& job_id, std::optional<JobState> from, JobState to) {
        Stmt t(db_, "INSERT INTO transitions (job_id, from_state, to_state, at) VALUES (?, ?, ?, ?)");
        t.bind(1, job_id);
        if (from) t.bind(2, to_string(*from));
        t.bind(3, to_string(to));
        t.bind(4, utc_timestamp_ms());
        t.step();
    }

    sqlite3* db_ = nullptr;
    mutable std::mutex mu_;
};

inline std::string new_job_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}() ^ static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())};
    std::lock_guard lock(mu);
    const std::uint64_t hi = rng(), lo = rng();
    std::array<std::uint8_t, 16> b{};
    for (int i = 0; i < 8; ++i) {
        b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(hi >> (8 * i));
        b[static_cast<std::size_t>(i + 8)] = static_cast<std::uint8_t>(lo >> (8 * i));
    }
    return "job-" + to_hex(b);
}

}  // namespace decomind::service
