#include <gtest/gtest.h>

#include "oracles.hpp"
#include "prefjudge/simulation.hpp"

namespace prefjudge {
namespace {

TEST(MajorityAccuracy, AgreesWithIndependentOracle) {
    for (double p : {0.1, 0.5, 0.6, 0.75, 0.9}) {
        for (std::uint32_t n : {1u, 2u, 3u, 4u, 8u, 16u}) {
            EXPECT_NEAR(sim::majority_accuracy(p, n), testing::strict_majority(p, n), 1e-12) << p << " " << n;
            EXPECT_NEAR(sim::majority_accuracy(p, n, 0.5), testing::majority_of_n(p, n), 1e-12) << p << " " << n;
        }
    }
    EXPECT_NEAR(testing::always_first_random_swap(8), 93.0 / 256.0, 1e-15);
    EXPECT_NEAR(testing::at_least_one(0.4, 8), 0.98320384, 1e-12);
}

TEST(SyntheticPairs, Shape) {
    const auto pairs = sim::synthetic_pairs(6, 1);
    ASSERT_EQ(pairs.size(), 6u);
    for (const auto& p : pairs) {
        EXPECT_TRUE(sim::is_synthetic_chosen(p.chosen.raw_text));
        EXPECT_FALSE(sim::is_synthetic_chosen(p.rejected.raw_text));
    }
    EXPECT_EQ(pairs[0].dimension, Dimension::GeneralVideoUnderstanding);
    EXPECT_EQ(pairs[2].dimension, Dimension::LongVideoUnderstanding);
}

TEST(OrderInvariantJudge, PositionDoesNotMatter) {
    const auto judge = sim::order_invariant_judge(0.75, 3);
    std::size_t right = 0, total = 0;
    for (std::uint32_t t = 0; t < 4000; ++t) {
        const auto id = std::to_string(t);
        const bool chosen_first = t % 2 == 0;
        const std::string a = "chosen x", b = "rejected y";
        const auto out = judge(JudgeQuery{"q", chosen_first ? a : b, chosen_first ? b : a, id, 0});
        right += (parse_pick(out) == Pick::First) == chosen_first;
        ++total;
    }
    EXPECT_NEAR(static_cast<double>(right) / static_cast<double>(total), 0.75, 0.03);
    const auto x = judge(JudgeQuery{"q", "chosen", "rejected", "p", 1});
    EXPECT_EQ(judge(JudgeQuery{"q", "chosen", "rejected", "p", 1}), x);
}

TEST(CandidateSets, CorrectnessRate) {
    const auto sets = sim::synthetic_candidate_sets(1000, 8, 0.4, 2);
    std::size_t correct = 0;
    for (const auto& s : sets) {
        EXPECT_NO_THROW(s.validate());
        for (const auto& c : s.candidates) correct += c.verdict == Verdict::Correct;
    }
    EXPECT_NEAR(static_cast<double>(correct) / 8000.0, 0.4, 0.02);
}

}  // namespace
}  // namespace prefjudge
