#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "prefjudge/framespec.hpp"

namespace prefjudge {

enum class GroundTruthKind : std::uint8_t { ChoiceLabel, OpenEnded };

struct GroundTruth {
    GroundTruthKind kind = GroundTruthKind::OpenEnded;
    std::string value;

    // Normalizes choice labels ("(c)" -> "C"); throws InvalidInput when a
    // ChoiceLabel does not reduce to a single letter.
    static GroundTruth choice(std::string_view label);
    static GroundTruth open_ended(std::string value);
    // ChoiceLabel when the text is a bare letter such as "B", "(b)" or "B.".
    static GroundTruth infer(std::string_view value);
};

enum class Dimension : std::uint8_t { GeneralVideoUnderstanding, VideoReasoning, LongVideoUnderstanding, Other };

std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view name);

// One prompt with its ground truth; the input unit of the rollout stage.
struct Sample {
    std::string sample_id;
    std::string question;
    GroundTruth ground_truth;
    double duration_seconds = 0.0;
    Dimension dimension = Dimension::Other;
};

enum class Verdict : std::uint8_t { Correct, Incorrect, Unverified };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view name);

struct RolloutRecord {
    std::string sample_id;
    std::string model_name;
    std::uint32_t rollout_index = 0;
    PerturbationOp perturbation;
    FrameSpec frame_spec;
    std::string raw_text;
    std::optional<std::string> extracted_answer;
    Verdict verdict = Verdict::Unverified;
    std::uint64_t token_estimate = 0;
    // Transport or verification failure detail; empty on success.
    std::string error;
    // Deterministic / JudgeDelegated, plus the judge transcript when delegated.
    std::string verify_method;
    std::optional<std::string> judge_raw;
};

struct PreferencePair {
    std::string pair_id;
    std::string sample_id;
    std::string question;
    FrameSpec frame_spec;
    RolloutRecord chosen;
    RolloutRecord rejected;
    Dimension dimension = Dimension::Other;
    std::uint64_t chosen_len = 0;
    std::uint64_t rejected_len = 0;
};

void to_json(nlohmann::json& j, const GroundTruth& g);
void from_json(const nlohmann::json& j, GroundTruth& g);
void to_json(nlohmann::json& j, const Sample& s);
void from_json(const nlohmann::json& j, Sample& s);
void to_json(nlohmann::json& j, const RolloutRecord& r);
void from_json(const nlohmann::json& j, RolloutRecord& r);
void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);

}  // namespace prefjudge
