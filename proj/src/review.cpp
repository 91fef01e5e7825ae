#include "prefjudge/review.hpp"

#include <mutex>
#include <sstream>

#include <httplib.h>

#include "prefjudge/errors.hpp"

namespace prefjudge {

std::string_view to_string(ReviewDecision d) {
    switch (d) {
        case ReviewDecision::Keep: return "Keep";
        case ReviewDecision::DropReasoningWrongAnswerRight: return "DropReasoningWrongAnswerRight";
        case ReviewDecision::DropReasoningRightAnswerWrong: return "DropReasoningRightAnswerWrong";
        case ReviewDecision::DropOther: return "DropOther";
    }
    return "DropOther";
}

ReviewDecision review_decision_from_string(std::string_view name) {
    for (auto d : {ReviewDecision::Keep, ReviewDecision::DropReasoningWrongAnswerRight,
                   ReviewDecision::DropReasoningRightAnswerWrong, ReviewDecision::DropOther}) {
        if (to_string(d) == name) return d;
    }
    throw InvalidInput("unknown review decision: " + std::string(name));
}

bool ReviewVerdict::same_content(const ReviewVerdict& o) const {
    return pair_id == o.pair_id && decision == o.decision && reviewer_id == o.reviewer_id && note == o.note;
}

nlohmann::json to_json(const ReviewVerdict& v) {
    return with_schema_version({{"pair_id", v.pair_id},
                                {"decision", to_string(v.decision)},
                                {"reviewer_id", v.reviewer_id},
                                {"note", v.note},
                                {"decided_at", v.decided_at}});
}

ReviewVerdict review_verdict_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidInput("verdict body must be a JSON object");
    ReviewVerdict v;
    try {
        v.pair_id = j.value("pair_id", std::string{});
        v.decision = review_decision_from_string(j.at("decision").get<std::string>());
        v.reviewer_id = j.at("reviewer_id").get<std::string>();
        v.note = j.value("note", std::string{});
        v.decided_at = j.value("decided_at", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed verdict: ") + e.what());
    }
    if (v.reviewer_id.empty()) throw InvalidInput("reviewer_id must be nonempty");
    return v;
}

nlohmann::json to_json(const ReviewStats& s) {
    return {{"progress",
             {{"total", s.progress.total},
              {"decided", s.progress.decided},
              {"pending", s.progress.pending},
              {"leased", s.progress.leased}}},
            {"by_decision", s.by_decision},
            {"by_reviewer", s.by_reviewer}};
}

namespace {

nlohmann::json progress_json(const ReviewProgress& p) {
    return {{"total", p.total}, {"decided", p.decided}, {"pending", p.pending}, {"leased", p.leased}};
}

}  // namespace

ReviewStore::ReviewStore(std::vector<PreferencePair> pairs, std::filesystem::path verdict_log,
                         std::chrono::seconds lease_window)
    : log_path_(std::move(verdict_log)), lease_window_(lease_window) {
    for (auto& p : pairs) {
        const auto id = p.pair_id;
        if (!pairs_.emplace(id, std::move(p)).second) throw InvalidInput("duplicate pair_id " + id);
    }
    log_ = std::make_unique<JsonlWriter>(log_path_, SyncPolicy::EveryRecord);
    for (const auto& j : read_jsonl(log_path_)) {
        auto v = review_verdict_from_json(j);
        active_[v.pair_id] = v;
        history_.push_back(std::move(v));
    }
}

std::optional<PreferencePair> ReviewStore::lease_next(const std::string& reviewer, Clock::time_point now) {
    std::unique_lock lock(mutex_);
    std::erase_if(leases_, [&](const auto& kv) { return kv.second.expires <= now; });

    for (const auto& [id, lease] : leases_) {
        if (lease.reviewer == reviewer && !active_.contains(id)) {
            leases_[id].expires = now + lease_window_;
            return pairs_.at(id);
        }
    }
    for (const auto& [id, pair] : pairs_) {
        if (active_.contains(id) || leases_.contains(id)) continue;
        leases_[id] = Lease{reviewer, now + lease_window_};
        return pair;
    }
    return std::nullopt;
}

bool ReviewStore::release(const std::string& pair_id, const std::string& reviewer) {
    std::unique_lock lock(mutex_);
    const auto it = leases_.find(pair_id);
    if (it == leases_.end() || it->second.reviewer != reviewer) return false;
    leases_.erase(it);
    return true;
}

SubmitOutcome ReviewStore::submit(ReviewVerdict verdict) {
    std::unique_lock lock(mutex_);
    if (!pairs_.contains(verdict.pair_id)) return SubmitOutcome::UnknownPair;
    if (const auto it = active_.find(verdict.pair_id); it != active_.end() && it->second.same_content(verdict))
        return SubmitOutcome::Duplicate;
    if (verdict.decided_at.empty()) verdict.decided_at = utc_timestamp();
    log_->append(to_json(verdict));
    leases_.erase(verdict.pair_id);
    active_[verdict.pair_id] = verdict;
    history_.push_back(std::move(verdict));
    return SubmitOutcome::Recorded;
}

std::optional<PreferencePair> ReviewStore::pair(const std::string& pair_id) const {
    std::shared_lock lock(mutex_);
    const auto it = pairs_.find(pair_id);
    if (it == pairs_.end()) return std::nullopt;
    return it->second;
}

std::optional<ReviewVerdict> ReviewStore::active_verdict(const std::string& pair_id) const {
    std::shared_lock lock(mutex_);
    const auto it = active_.find(pair_id);
    if (it == active_.end()) return std::nullopt;
    return it->second;
}

std::vector<ReviewVerdict> ReviewStore::history() const {
    std::shared_lock lock(mutex_);
    return history_;
}

std::string ReviewStore::export_jsonl() const {
    std::shared_lock lock(mutex_);
    std::string out;
    for (const auto& [id, pair] : pairs_) {
        const auto it = active_.find(id);
        if (it == active_.end() || it->second.decision != ReviewDecision::Keep) continue;
        nlohmann::json j = pair;
        const auto& v = it->second;
        j["review"] = {{"decision", to_string(v.decision)},
                       {"reviewer_id", v.reviewer_id},
                       {"note", v.note},
                       {"decided_at", v.decided_at}};
        out += canonical_dump(j);
        out += '\n';
    }
    return out;
}

ReviewProgress ReviewStore::progress_locked(Clock::time_point now) const {
    ReviewProgress p;
    p.total = pairs_.size();
    p.decided = active_.size();
    p.pending = p.total - p.decided;
    for (const auto& [id, lease] : leases_) {
        if (lease.expires > now && !active_.contains(id)) ++p.leased;
    }
    return p;
}

ReviewProgress ReviewStore::progress(Clock::time_point now) const {
    std::shared_lock lock(mutex_);
    return progress_locked(now);
}

ReviewStats ReviewStore::stats(Clock::time_point now) const {
    std::shared_lock lock(mutex_);
    ReviewStats s;
    s.progress = progress_locked(now);
    for (const auto& [id, v] : active_) {
        const auto d = std::string(to_string(v.decision));
        ++s.by_decision[d];
        ++s.by_reviewer[v.reviewer_id][d];
    }
    return s;
}

std::map<std::string, ReviewVerdict> ReviewStore::rebuild_index_from_log() const {
    std::map<std::string, ReviewVerdict> index;
    for (const auto& j : read_jsonl(log_path_)) {
        auto v = review_verdict_from_json(j);
        index[v.pair_id] = std::move(v);
    }
    return index;
}

std::map<std::string, ReviewVerdict> ReviewStore::active_index() const {
    std::shared_lock lock(mutex_);
    return active_;
}

// ---------------------------------------------------------------------------

ReviewServer::ReviewServer(std::shared_ptr<ReviewStore> store, std::optional<std::filesystem::path> static_dir)
    : store_(std::move(store)), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    auto json_reply = [](httplib::Response& res, const nlohmann::json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };

    srv.Get("/pairs/next", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const auto reviewer = req.get_param_value("reviewer");
        if (reviewer.empty()) return json_reply(res, {{"error", "reviewer query parameter is required"}}, 400);
        auto pair = store_->lease_next(reviewer);
        if (!pair) {
            res.status = 204;
            return;
        }
        json_reply(res, {{"pair", *pair}, {"progress", progress_json(store_->progress())}});
    });

    srv.Get(R"(/pairs/([^/]+))", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        auto pair = store_->pair(id);
        if (!pair) return json_reply(res, {{"error", "unknown pair " + id}}, 404);
        auto verdict = store_->active_verdict(id);
        json_reply(res, {{"pair", *pair}, {"verdict", verdict ? to_json(*verdict) : nlohmann::json(nullptr)}});
    });

    srv.Post(R"(/pairs/([^/]+)/verdict)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        ReviewVerdict v;
        try {
            v = review_verdict_from_json(nlohmann::json::parse(req.body));
        } catch (const nlohmann::json::parse_error&) {
            return json_reply(res, {{"error", "body is not JSON"}}, 400);
        } catch (const InvalidInput& e) {
            return json_reply(res, {{"error", e.what()}}, 400);
        }
        if (!v.pair_id.empty() && v.pair_id != id)
            return json_reply(res, {{"error", "pair_id in body does not match path"}}, 400);
        v.pair_id = id;
        switch (store_->submit(v)) {
            case SubmitOutcome::UnknownPair: return json_reply(res, {{"error", "unknown pair " + id}}, 404);
            case SubmitOutcome::Duplicate: return json_reply(res, {{"status", "duplicate"}, {"pair_id", id}});
            case SubmitOutcome::Recorded: return json_reply(res, {{"status", "recorded"}, {"pair_id", id}});
        }
    });

    srv.Post(R"(/pairs/([^/]+)/release)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        const bool released = store_->release(id, req.get_param_value("reviewer"));
        json_reply(res, {{"released", released}, {"pair_id", id}});
    });

    srv.Get("/export", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const auto format = req.has_param("format") ? req.get_param_value("format") : std::string("jsonl");
        if (format != "jsonl") return json_reply(res, {{"error", "only format=jsonl is supported"}}, 400);
        res.set_content(store_->export_jsonl(), "application/x-ndjson");
    });

    srv.Get("/stats", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json_reply(res, to_json(store_->stats()));
    });

    if (static_dir) srv.set_mount_point("/", static_dir->string());
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw ConfigError("cannot bind review service to " + host + ":" + std::to_string(port));
    return port;
}

void ReviewServer::listen() { server_->listen_after_bind(); }

void ReviewServer::stop() {
    if (server_) server_->stop();
}

}  // namespace prefjudge
