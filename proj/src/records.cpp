#include "prefjudge/records.hpp"

#include <cctype>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"

namespace prefjudge {

namespace {

std::optional<char> bare_label(std::string_view text) {
    std::string s;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != '.' && c != '[' && c != ']')
            s.push_back(c);
    }
    if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0])))
        return static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return std::nullopt;
}

}  // namespace

GroundTruth GroundTruth::choice(std::string_view label) {
    const auto l = bare_label(label);
    if (!l) throw InvalidInput("choice-label ground truth must be a single letter, got '" + std::string(label) + "'");
    return {GroundTruthKind::ChoiceLabel, std::string(1, *l)};
}

GroundTruth GroundTruth::open_ended(std::string value) {
    return {GroundTruthKind::OpenEnded, std::move(value)};
}

GroundTruth GroundTruth::infer(std::string_view value) {
    if (bare_label(value)) return choice(value);
    return open_ended(std::string(value));
}

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::GeneralVideoUnderstanding: return "GeneralVideoUnderstanding";
        case Dimension::VideoReasoning: return "VideoReasoning";
        case Dimension::LongVideoUnderstanding: return "LongVideoUnderstanding";
        case Dimension::Other: return "Other";
    }
    return "Other";
}

Dimension dimension_from_string(std::string_view name) {
    for (auto d : {Dimension::GeneralVideoUnderstanding, Dimension::VideoReasoning, Dimension::LongVideoUnderstanding,
                   Dimension::Other}) {
        if (to_string(d) == name) return d;
    }
    throw InvalidInput("unknown dimension: " + std::string(name));
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Correct: return "Correct";
        case Verdict::Incorrect: return "Incorrect";
        case Verdict::Unverified: return "Unverified";
    }
    return "Unverified";
}

Verdict verdict_from_string(std::string_view name) {
    for (auto v : {Verdict::Correct, Verdict::Incorrect, Verdict::Unverified}) {
        if (to_string(v) == name) return v;
    }
    throw InvalidInput("unknown verdict: " + std::string(name));
}

void to_json(nlohmann::json& j, const GroundTruth& g) {
    j = {{"kind", g.kind == GroundTruthKind::ChoiceLabel ? "ChoiceLabel" : "OpenEnded"}, {"value", g.value}};
}

void from_json(const nlohmann::json& j, GroundTruth& g) {
    const auto kind = j.at("kind").get<std::string>();
    const auto value = j.at("value").get<std::string>();
    if (kind == "ChoiceLabel")
        g = GroundTruth::choice(value);
    else if (kind == "OpenEnded")
        g = GroundTruth::open_ended(value);
    else
        throw InvalidInput("unknown ground-truth kind: " + kind);
}

void to_json(nlohmann::json& j, const Sample& s) {
    j = with_schema_version({{"sample_id", s.sample_id},
                             {"question", s.question},
                             {"ground_truth", s.ground_truth},
                             {"duration_seconds", s.duration_seconds},
                             {"dimension", to_string(s.dimension)}});
}

void from_json(const nlohmann::json& j, Sample& s) {
    j.at("sample_id").get_to(s.sample_id);
    j.at("question").get_to(s.question);
    // Either a structured ground truth or a plain "answer" string.
    if (j.contains("ground_truth"))
        j["ground_truth"].get_to(s.ground_truth);
    else
        s.ground_truth = GroundTruth::infer(j.at("answer").get<std::string>());
    s.duration_seconds = j.value("duration_seconds", 0.0);
    s.dimension = dimension_from_string(j.value("dimension", std::string("Other")));
}

void to_json(nlohmann::json& j, const RolloutRecord& r) {
    j = with_schema_version({{"sample_id", r.sample_id},
                             {"model_name", r.model_name},
                             {"rollout_index", r.rollout_index},
                             {"perturbation", r.perturbation},
                             {"frame_spec", r.frame_spec},
                             {"raw_text", r.raw_text},
                             {"verdict", to_string(r.verdict)},
                             {"token_estimate", r.token_estimate}});
    j["extracted_answer"] = r.extracted_answer ? nlohmann::json(*r.extracted_answer) : nlohmann::json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    if (!r.verify_method.empty()) j["verify_method"] = r.verify_method;
    if (r.judge_raw) j["judge_raw"] = *r.judge_raw;
}

void from_json(const nlohmann::json& j, RolloutRecord& r) {
    j.at("sample_id").get_to(r.sample_id);
    j.at("model_name").get_to(r.model_name);
    j.at("rollout_index").get_to(r.rollout_index);
    j.at("perturbation").get_to(r.perturbation);
    j.at("frame_spec").get_to(r.frame_spec);
    j.at("raw_text").get_to(r.raw_text);
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.token_estimate = j.value("token_estimate", std::uint64_t{0});
    const auto& ans = j.at("extracted_answer");
    r.extracted_answer = ans.is_null() ? std::nullopt : std::optional<std::string>(ans.get<std::string>());
    r.error = j.value("error", std::string{});
    r.verify_method = j.value("verify_method", std::string{});
    if (j.contains("judge_raw"))
        r.judge_raw = j["judge_raw"].get<std::string>();
    else
        r.judge_raw.reset();
    if (r.verdict != Verdict::Unverified && !r.extracted_answer)
        throw DataIntegrityError("rollout " + r.sample_id + "/" + r.model_name + "/" +
                                 std::to_string(r.rollout_index) + " is verified but has no extracted answer");
}

void to_json(nlohmann::json& j, const PreferencePair& p) {
    j = with_schema_version({{"pair_id", p.pair_id},
                             {"sample_id", p.sample_id},
                             {"question", p.question},
                             {"frame_spec", p.frame_spec},
                             {"chosen", p.chosen},
                             {"rejected", p.rejected},
                             {"dimension", to_string(p.dimension)},
                             {"chosen_len", p.chosen_len},
                             {"rejected_len", p.rejected_len}});
}

void from_json(const nlohmann::json& j, PreferencePair& p) {
    j.at("pair_id").get_to(p.pair_id);
    j.at("sample_id").get_to(p.sample_id);
    j.at("question").get_to(p.question);
    j.at("frame_spec").get_to(p.frame_spec);
    j.at("chosen").get_to(p.chosen);
    j.at("rejected").get_to(p.rejected);
    p.dimension = dimension_from_string(j.value("dimension", std::string("Other")));
    p.chosen_len = j.value("chosen_len", std::uint64_t{0});
    p.rejected_len = j.value("rejected_len", std::uint64_t{0});
}

}  // namespace prefjudge
