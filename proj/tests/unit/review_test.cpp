#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "prefjudge/errors.hpp"
#include "prefjudge/review.hpp"
#include "prefjudge/simulation.hpp"
#include "temp_dir.hpp"

namespace prefjudge {
namespace {

using namespace std::chrono_literals;
using testing::TempDir;

ReviewVerdict verdict(const std::string& id, ReviewDecision d, const std::string& who = "r1") {
    return {id, d, who, "", ""};
}

TEST(Store, LeasesLowestUnclaimedPair) {
    TempDir dir;
    ReviewStore store(sim::synthetic_pairs(3, 1), dir / "v.jsonl", 60s);
    const auto t0 = ReviewStore::Clock::now();
    EXPECT_EQ(store.lease_next("a", t0)->pair_id, "pair-syn-000000");
    EXPECT_EQ(store.lease_next("a", t0)->pair_id, "pair-syn-000000");
    EXPECT_EQ(store.lease_next("b", t0)->pair_id, "pair-syn-000001");
    EXPECT_EQ(store.progress(t0).leased, 2u);
    EXPECT_EQ(store.lease_next("c", t0 + 61s)->pair_id, "pair-syn-000000");
    EXPECT_TRUE(store.release("pair-syn-000000", "c"));
    EXPECT_FALSE(store.release("pair-syn-000000", "c"));
}

TEST(Store, SubmitIsIdempotentAndLastWriteWins) {
    TempDir dir;
    ReviewStore store(sim::synthetic_pairs(2, 1), dir / "v.jsonl");
    EXPECT_EQ(store.submit(verdict("pair-syn-000000", ReviewDecision::Keep)), SubmitOutcome::Recorded);
    EXPECT_EQ(store.submit(verdict("pair-syn-000000", ReviewDecision::Keep)), SubmitOutcome::Duplicate);
    EXPECT_EQ(store.submit(verdict("nope", ReviewDecision::Keep)), SubmitOutcome::UnknownPair);
    EXPECT_EQ(store.submit(verdict("pair-syn-000000", ReviewDecision::DropOther)), SubmitOutcome::Recorded);
    EXPECT_EQ(store.active_verdict("pair-syn-000000")->decision, ReviewDecision::DropOther);
    EXPECT_EQ(store.history().size(), 2u);
    EXPECT_TRUE(store.export_jsonl().empty());
    EXPECT_EQ(store.rebuild_index_from_log().size(), store.active_index().size());
}

TEST(Store, RestoresFromLogAndExportsKeptPairs) {
    TempDir dir;
    std::string exported;
    {
        ReviewStore store(sim::synthetic_pairs(3, 1), dir / "v.jsonl");
        store.submit(verdict("pair-syn-000002", ReviewDecision::Keep, "x"));
        store.submit(verdict("pair-syn-000000", ReviewDecision::Keep, "y"));
        store.submit(verdict("pair-syn-000001", ReviewDecision::DropReasoningWrongAnswerRight, "y"));
        exported = store.export_jsonl();
    }
    ReviewStore reopened(sim::synthetic_pairs(3, 1), dir / "v.jsonl");
    EXPECT_EQ(reopened.export_jsonl(), exported);
    EXPECT_EQ(std::count(exported.begin(), exported.end(), '\n'), 2);
    EXPECT_LT(exported.find("pair-syn-000000"), exported.find("pair-syn-000002"));
    const auto first = nlohmann::json::parse(exported.substr(0, exported.find('\n')));
    EXPECT_EQ(first["review"]["reviewer_id"], "y");
    EXPECT_EQ(first["review"]["decision"], "Keep");
    const auto stats = reopened.stats();
    EXPECT_EQ(stats.progress.decided, 3u);
    EXPECT_EQ(stats.by_decision.at("Keep"), 2u);
    EXPECT_EQ(stats.by_reviewer.at("y").at("Keep"), 1u);
    EXPECT_FALSE(reopened.lease_next("z"));
}

TEST(Store, ConcurrentLeasesNeverCollide) {
    TempDir dir;
    ReviewStore store(sim::synthetic_pairs(200, 1), dir / "v.jsonl");
    std::mutex m;
    std::vector<std::string> leased;
    {
        std::vector<std::jthread> reviewers;
        for (int r = 0; r < 8; ++r) {
            reviewers.emplace_back([&, r] {
                const auto who = "rev" + std::to_string(r);
                while (auto p = store.lease_next(who)) {
                    {
                        std::lock_guard lock(m);
                        leased.push_back(p->pair_id);
                    }
                    store.submit(verdict(p->pair_id, ReviewDecision::Keep, who));
                }
            });
        }
    }
    EXPECT_EQ(leased.size(), 200u);
    EXPECT_EQ(std::set<std::string>(leased.begin(), leased.end()).size(), 200u);
    EXPECT_EQ(store.rebuild_index_from_log().size(), 200u);
}

TEST(Store, DuplicatePairIdsRejected) {
    TempDir dir;
    auto pairs = sim::synthetic_pairs(2, 1);
    pairs[1].pair_id = pairs[0].pair_id;
    EXPECT_THROW(ReviewStore(pairs, dir / "v.jsonl"), InvalidInput);
}

TEST(Verdict, JsonValidation) {
    EXPECT_THROW(review_verdict_from_json({{"decision", "Keep"}}), InvalidInput);
    EXPECT_THROW(review_verdict_from_json({{"decision", "Maybe"}, {"reviewer_id", "r"}}), InvalidInput);
    EXPECT_THROW(review_verdict_from_json({{"decision", "Keep"}, {"reviewer_id", ""}}), InvalidInput);
    EXPECT_THROW(review_verdict_from_json(nlohmann::json::array()), InvalidInput);
    const auto v = review_verdict_from_json({{"decision", "DropOther"}, {"reviewer_id", "r"}, {"note", "n"}});
    EXPECT_EQ(v.decision, ReviewDecision::DropOther);
    EXPECT_EQ(v.note, "n");
}

}  // namespace
}  // namespace prefjudge
