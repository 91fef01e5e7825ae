#include <gtest/gtest.h>

#include "oracles.hpp"
#include "prefjudge/bon.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/simulation.hpp"

namespace prefjudge {
namespace {

RolloutRecord cand(const std::string& sample, std::uint32_t i, const std::string& answer, bool correct) {
    RolloutRecord r;
    r.sample_id = sample;
    r.rollout_index = i;
    r.raw_text = "cand" + std::to_string(i) + " <answer>" + answer + "</answer>";
    r.verdict = correct ? Verdict::Correct : Verdict::Incorrect;
    return r;
}

CandidateSet set_of(std::vector<std::pair<std::string, bool>> answers) {
    CandidateSet s{"s", "q?", GroundTruth::choice("A"), {}};
    for (std::uint32_t i = 0; i < answers.size(); ++i) s.candidates.push_back(cand("s", i, answers[i].first, answers[i].second));
    return s;
}

// Judge that prefers the response whose candidate number is larger.
PairwiseJudge prefers_higher_index() {
    return [](const JudgeQuery& q) {
        const auto num = [](std::string_view t) { return std::stoi(std::string(t.substr(4, t.find(' ') - 4))); };
        return std::string(num(q.response_1) > num(q.response_2) ? "[answer]1[/answer]" : "[answer]2[/answer]");
    };
}

TEST(Pointwise, HighestScoreLowestIndexOnTies) {
    const auto s = set_of({{"B", false}, {"A", true}, {"A", true}});
    EXPECT_EQ(bon_pointwise(s, sim::oracle_scorer()).index, 1u);
    PointwiseScorer flat = [](std::string_view, const RolloutRecord&) { return 0.5; };
    EXPECT_EQ(bon_pointwise(s, flat).index, 0u);
    EXPECT_THROW(bon_pointwise(CandidateSet{}, flat), InvalidInput);
}

TEST(Knockout, UsesNMinusOneCallsAndFindsTheDominantCandidate) {
    for (std::size_t n = 1; n <= 8; ++n) {
        std::vector<std::pair<std::string, bool>> a(n, {"B", false});
        const auto s = set_of(a);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto sel = bon_pairwise(s, prefers_higher_index(), {PairwiseMode::Knockout, seed});
            EXPECT_EQ(sel.judge_calls, n - 1);
            EXPECT_EQ(sel.index, n - 1);
        }
    }
}

TEST(Knockout, ExhaustiveOverSmallSets) {
    // For every correctness pattern of N <= 4 candidates, a perfect judge picks
    // a correct candidate iff one exists.
    for (std::size_t n = 1; n <= 4; ++n) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            std::vector<std::pair<std::string, bool>> a;
            for (std::size_t i = 0; i < n; ++i) {
                const bool ok = (mask >> i) & 1u;
                a.emplace_back(ok ? "A" : "B", ok);
            }
            const auto s = set_of(a);
            const auto judge = sim::order_invariant_judge(1.0, 0, sim::answers("A"));
            for (auto mode : {PairwiseMode::Knockout, PairwiseMode::RoundRobin}) {
                const auto sel = bon_pairwise(s, judge, {mode, mask});
                EXPECT_EQ(s.candidates[sel.index].verdict == Verdict::Correct, mask != 0) << n << " " << mask;
            }
        }
    }
}

TEST(Knockout, InvalidAndTransportKeepChampion) {
    const auto s = set_of({{"A", true}, {"B", false}, {"B", false}});
    EXPECT_EQ(bon_pairwise(s, sim::invalid_judge()).index, 0u);
    PairwiseJudge down = [](const JudgeQuery&) -> std::string { throw TransportError("down"); };
    const auto sel = bon_pairwise(s, down);
    EXPECT_EQ(sel.index, 0u);
    EXPECT_TRUE(sel.flagged);
}

TEST(RoundRobin, JudgesEveryPairOnce) {
    const auto s = set_of({{"A", true}, {"B", false}, {"B", false}, {"B", false}});
    const auto sel = bon_pairwise(s, prefers_higher_index(), {PairwiseMode::RoundRobin, 0});
    EXPECT_EQ(sel.judge_calls, 6u);
    EXPECT_EQ(sel.index, 3u);
}

TEST(Majority, LargestGroupEarliestMember) {
    EXPECT_EQ(majority_of_n(set_of({{"B", false}, {"A", true}, {"A", true}})).index, 1u);
    EXPECT_EQ(majority_of_n(set_of({{"B", false}, {"A", true}, {"(a)", true}, {"b.", false}})).index, 0u);
    EXPECT_EQ(majority_of_n(set_of({{"A", true}, {"B", false}})).index, 0u);
    auto none = set_of({{"A", true}});
    none.candidates[0].raw_text = "no answer";
    const auto sel = majority_of_n(none);
    EXPECT_TRUE(sel.flagged);
    EXPECT_EQ(sel.index, 0u);
}

TEST(Majority, OpenEndedAnswersWithArticles) {
    const auto s = set_of({{"a red ball", true}, {"A", false}, {"A red ball.", true}});
    EXPECT_EQ(majority_of_n(s).index, 0u);
}

TEST(Sweep, PrefixesAndCsv) {
    const auto sets = sim::synthetic_candidate_sets(300, 8, 0.4, 3);
    std::map<std::string, Selector> strategies{
        {"first", [](const CandidateSet&) { return Selection{}; }},
        {"oracle", [](const CandidateSet& s) { return bon_pointwise(s, sim::oracle_scorer()); }},
    };
    const auto curve = bon_sweep(sets, strategies);
    for (std::size_t n : {1, 2, 4, 6, 8}) {
        EXPECT_EQ(curve.sets_evaluated.at(n), 300u);
        EXPECT_EQ(curve.accuracy.at("first").at(n), curve.accuracy.at("first").at(1));
    }
    EXPECT_EQ(curve.accuracy.at("oracle").at(1), curve.accuracy.at("first").at(1));
    for (std::size_t n : {2, 4, 6, 8}) EXPECT_GE(curve.accuracy.at("oracle").at(n), curve.accuracy.at("oracle").at(1));
    const auto csv = to_csv(curve);
    EXPECT_TRUE(csv.starts_with("strategy,n,accuracy,sets\n"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
    EXPECT_EQ(to_json(curve)["schema_version"], "1.0");
}

TEST(Sweep, SmallSetsAreSkippedForLargeN) {
    auto sets = sim::synthetic_candidate_sets(3, 2, 0.5, 1);
    const auto curve = bon_sweep(sets, {{"first", [](const CandidateSet&) { return Selection{}; }}}, {1, 4});
    EXPECT_EQ(curve.sets_evaluated.at(4), 0u);
    EXPECT_FALSE(curve.accuracy.at("first").contains(4));
    EXPECT_THROW(bon_sweep(sets, {}, {0}), InvalidInput);
}

}  // namespace
}  // namespace prefjudge
