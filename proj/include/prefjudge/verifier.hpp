#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "prefjudge/chat.hpp"
#include "prefjudge/records.hpp"

namespace prefjudge {

enum class MatchMethod { Deterministic, JudgeDelegated };

struct MatchVerdict {
    bool matched = false;
    MatchMethod method = MatchMethod::Deterministic;
    std::optional<std::string> judge_raw;
};

std::string_view to_string(MatchMethod m);

// Trimmed content of the last well-formed <answer>...</answer> block.
std::optional<std::string> extract_answer(std::string_view raw_text);

// Rule-based matching. For choice labels the prediction must lead with a
// label ("C", "C.", "(C)", "Option C: ...", "The answer is C"); any other
// standalone letter in the text makes it ambiguous. Open-ended answers match
// only on normalized equality. Returns nullopt when undecidable.
// Throws InvalidInput on an empty prediction.
std::optional<MatchVerdict> match_deterministic(std::string_view prediction, const GroundTruth& gt);

// Grouping key for answers: the choice letter when the text unambiguously
// leads with one, otherwise the lower-cased punctuation-free text. A bare
// letter followed by more words ("a red ball") counts as text.
std::string canonical_answer(std::string_view answer);

std::string render_match_prompt(std::string_view prediction, const GroundTruth& gt);

// "yes"/"no" after trimming, lower-casing and stripping punctuation.
std::optional<bool> parse_yes_no(std::string_view reply);

// Deterministic first; otherwise asks the judge (one re-ask on an unusable
// reply). Throws VerificationFailed when the judge never answers yes/no;
// TransportError propagates.
MatchVerdict match_with_judge(std::string_view prediction, const GroundTruth& gt, const TextCompleter& judge);

// Fills extracted_answer, verdict and provenance on a rollout. Without a
// judge, undecidable predictions stay Unverified.
void verify_rollout(RolloutRecord& record, const GroundTruth& gt, const TextCompleter* judge);

}  // namespace prefjudge
