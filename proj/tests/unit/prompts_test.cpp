#include <gtest/gtest.h>

#include "prefjudge/errors.hpp"
#include "prefjudge/eval.hpp"
#include "prefjudge/prompts.hpp"
#include "prefjudge/rollout.hpp"
#include "prefjudge/verifier.hpp"

namespace prefjudge {
namespace {

TEST(Fill, SinglePassNoRescan) {
    EXPECT_EQ(prompts::fill("Q: <question>!", {{"<question>", "why <question>?"}}), "Q: why <question>?!");
    EXPECT_EQ(prompts::fill("<a><b><a>", {{"<a>", "<b>"}, {"<b>", "x"}}), "<b>x<b>");
    EXPECT_EQ(prompts::fill("plain", {}), "plain");
}

TEST(Templates, CotKeepsAnswerTagsAndFillsQuestion) {
    const auto p = render_cot_prompt("How many cats?");
    EXPECT_NE(p.find("You are given the following problem:\n\nHow many cats?\n\n"), std::string::npos);
    EXPECT_NE(p.find("<answer>\n...\n</answer>"), std::string::npos);
    EXPECT_EQ(p.find("<question>"), std::string::npos);
    EXPECT_THROW(render_cot_prompt(""), InvalidInput);
}

TEST(Templates, MatchingPromptEndsWithFields) {
    const auto p = render_match_prompt("C. blue", GroundTruth::choice("C"));
    EXPECT_TRUE(p.ends_with("GT answer: C\n\nPrediction: C. blue"));
    EXPECT_NE(p.find("Output only a single word"), std::string::npos);
}

TEST(Templates, JudgePromptOrder) {
    const auto p = render_judge_prompt("Q?", "first resp", "second resp");
    const auto q = p.find("[Question]\nQ?");
    const auto r1 = p.find("[Response 1]\nfirst resp");
    const auto r2 = p.find("[Response 2]\nsecond resp");
    ASSERT_NE(q, std::string::npos);
    ASSERT_NE(r1, std::string::npos);
    ASSERT_NE(r2, std::string::npos);
    EXPECT_LT(q, r1);
    EXPECT_LT(r1, r2);
    EXPECT_TRUE(p.ends_with("[answer]1/2[/answer]"));
    EXPECT_THROW(render_judge_prompt("Q", "", "x"), InvalidInput);
    EXPECT_EQ(render_judge_prompt("q", "a", "b", "<response 2>|<response 1>|<question>"), "b|a|q");
}

}  // namespace
}  // namespace prefjudge
