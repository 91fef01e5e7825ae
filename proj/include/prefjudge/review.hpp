#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefjudge/datastore.hpp"
#include "prefjudge/records.hpp"

namespace httplib {
class Server;
}

namespace prefjudge {

enum class ReviewDecision { Keep, DropReasoningWrongAnswerRight, DropReasoningRightAnswerWrong, DropOther };

std::string_view to_string(ReviewDecision d);
ReviewDecision review_decision_from_string(std::string_view name);

struct ReviewVerdict {
    std::string pair_id;
    ReviewDecision decision = ReviewDecision::Keep;
    std::string reviewer_id;
    std::string note;
    std::string decided_at;

    // Same decision, reviewer and note; decided_at is ignored.
    bool same_content(const ReviewVerdict& other) const;
};

nlohmann::json to_json(const ReviewVerdict& v);
ReviewVerdict review_verdict_from_json(const nlohmann::json& j);

struct ReviewProgress {
    std::size_t total = 0;
    std::size_t decided = 0;
    std::size_t pending = 0;
    std::size_t leased = 0;
};

struct ReviewStats {
    ReviewProgress progress;
    std::map<std::string, std::size_t> by_decision;
    std::map<std::string, std::map<std::string, std::size_t>> by_reviewer;  // reviewer -> decision -> count
};

nlohmann::json to_json(const ReviewStats& s);

enum class SubmitOutcome { Recorded, Duplicate, UnknownPair };

// Review queue over a fixed pair set. Verdicts go to an append-only log; the
// active-verdict index is rebuilt from that log on construction. Thread-safe.
class ReviewStore {
public:
    using Clock = std::chrono::steady_clock;

    ReviewStore(std::vector<PreferencePair> pairs, std::filesystem::path verdict_log,
                std::chrono::seconds lease_window = std::chrono::seconds(600));

    // Lowest pair_id without an active verdict and not leased to someone
    // else; leases it to `reviewer`. A reviewer's own unexpired lease is
    // returned again.
    std::optional<PreferencePair> lease_next(const std::string& reviewer, Clock::time_point now = Clock::now());

    // Drops `reviewer`'s lease on the pair, if any.
    bool release(const std::string& pair_id, const std::string& reviewer);

    // Identical resubmission of the active verdict is a no-op (Duplicate).
    SubmitOutcome submit(ReviewVerdict verdict);

    std::optional<PreferencePair> pair(const std::string& pair_id) const;
    std::optional<ReviewVerdict> active_verdict(const std::string& pair_id) const;
    std::vector<ReviewVerdict> history() const;

    // Pairs whose active verdict is Keep, in pair_id order, as JSONL with a
    // "review" sub-object.
    std::string export_jsonl() const;

    ReviewProgress progress(Clock::time_point now = Clock::now()) const;
    ReviewStats stats(Clock::time_point now = Clock::now()) const;

    // Active index recomputed from the persisted log (for consistency checks).
    std::map<std::string, ReviewVerdict> rebuild_index_from_log() const;
    std::map<std::string, ReviewVerdict> active_index() const;

private:
    struct Lease {
        std::string reviewer;
        Clock::time_point expires;
    };

    ReviewProgress progress_locked(Clock::time_point now) const;

    std::map<std::string, PreferencePair> pairs_;
    std::filesystem::path log_path_;
    std::chrono::seconds lease_window_;
    std::unique_ptr<JsonlWriter> log_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, ReviewVerdict> active_;
    std::vector<ReviewVerdict> history_;
    std::map<std::string, Lease> leases_;
};

// JSON-over-HTTP front end for a ReviewStore:
//   GET  /pairs/next?reviewer=<id>        200 {pair, progress} | 204
//   GET  /pairs/{id}                      200 {pair, verdict}  | 404
//   POST /pairs/{id}/verdict              200 {status}         | 400 | 404
//   POST /pairs/{id}/release?reviewer=<id>
//   GET  /export?format=jsonl
//   GET  /stats
class ReviewServer {
public:
    explicit ReviewServer(std::shared_ptr<ReviewStore> store, std::optional<std::filesystem::path> static_dir = {});
    ~ReviewServer();

    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    // Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

    ReviewStore& store() { return *store_; }

private:
    std::shared_ptr<ReviewStore> store_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace prefjudge
