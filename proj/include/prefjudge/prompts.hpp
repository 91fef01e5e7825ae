#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace prefjudge::prompts {

inline constexpr std::string_view kTemplateVersion = "1";

// CoT generation prompt; placeholder <question>.
inline constexpr std::string_view kCotGeneration =
    R"(You are given the following problem:

<question>

Please think step by step and reason carefully before producing the final answer.
Clearly explain your reasoning process internally, but only output the final answer.

The final answer must be concise, accurate, and wrapped inside the following XML tags:

<answer>
...
</answer>)";

// Answer-matching prompt; placeholders <answer> (ground truth) and <prediction>.
inline constexpr std::string_view kAnswerMatching =
    R"(You are an answer matching evaluator. Your task is to determine whether a prediction semantically matches a ground-truth (GT) answer according to the following rules.

1. If the GT is a choice label (e.g., A / B / C / D): judge as match if the prediction explicitly selects or refers to that label, regardless of additional explanatory text (e.g., "C. xxx" or "Option C: xxx"). Case, punctuation, and extra content are ignored. Judge as not match only if it cannot be confirmed that the prediction selects the GT label.
2. If the GT is an open-ended answer: judge as match if the prediction expresses the same or highly similar meaning, allowing for paraphrasing, reordering, or reasonable elaboration. Judge as not match only if the prediction is semantically contradictory, clearly divergent, or missing the core information.

Output Format: Output only a single word: yes if matched, no if not.

GT answer: <answer>

Prediction: <prediction>)";

// Unified pairwise judge prompt; placeholders <question>, <response 1>, <response 2>.
inline constexpr std::string_view kPairwiseJudge =
    R"(You are a highly skilled and impartial evaluator tasked with comparing two responses generated by a Large Multimodal Model for a given question. Start with a thorough, side-by-side comparative analysis, then choose the better response. Conclude with a single numeric choice:
- Output "1" if Response 1 is better.
- Output "2" if Response 2 is better.

Input

[Question]
<question>

[Response 1]
<response 1>

[Response 2]
<response 2>

Output Format

Your detailed comparative analysis followed by the final answer in the format:

[answer]1/2[/answer])";

using Slot = std::pair<std::string_view, std::string_view>;

// Single left-to-right pass: each placeholder occurrence in the template is
// replaced, inserted text is never rescanned, so values may contain
// placeholder-like text verbatim.
std::string fill(std::string_view tmpl, std::initializer_list<Slot> slots);

}  // namespace prefjudge::prompts
