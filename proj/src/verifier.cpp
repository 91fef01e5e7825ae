#include "prefjudge/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "prefjudge/errors.hpp"
#include "prefjudge/prompts.hpp"

namespace prefjudge {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string normalize_open(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c >= 0x80) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;
        }
    }
    return out;
}

const std::regex& leading_label_re() {
    static const std::regex re(
        R"(^\s*(?:(?:the\s+)?(?:final\s+|correct\s+)?(?:answer|option|choice)(?:\s+is)?\s*[:\-]?\s*)?[\(\[]?([a-z])[\)\]]?(?=$|[\s.,:;!?)\]]))",
        std::regex::ECMAScript | std::regex::icase);
    return re;
}

const std::regex& standalone_letter_re() {
    static const std::regex re(R"((?:^|[\s(\[/])([a-z])(?=$|[\s.,:;!?)\]/]))",
                               std::regex::ECMAScript | std::regex::icase);
    return re;
}

char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

// Leading choice letter, provided no other standalone letter follows it. With
// `strict`, a bare leading letter followed by more words ("a red ball") is
// read as prose rather than a label.
std::optional<char> unambiguous_label(std::string_view prediction, bool strict = false) {
    const std::string text(prediction);
    std::smatch lead;
    if (!std::regex_search(text, lead, leading_label_re())) return std::nullopt;
    const auto at = static_cast<std::size_t>(lead.position(1));
    const char label = upper(text[at]);
    if (strict && at == text.find_first_not_of(" \t\r\n") && at + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[at + 1])) &&
        text.find_first_not_of(" \t\r\n", at + 1) != std::string::npos)
        return std::nullopt;

    const auto rest_begin = text.begin() + lead.position(0) + lead.length(0);
    for (std::sregex_iterator it(rest_begin, text.end(), standalone_letter_re()), end; it != end; ++it) {
        if (upper((*it)[1].str()[0]) != label) return std::nullopt;
    }
    return label;
}

}  // namespace

std::string_view to_string(MatchMethod m) {
    return m == MatchMethod::Deterministic ? "Deterministic" : "JudgeDelegated";
}

std::optional<std::string> extract_answer(std::string_view raw_text) {
    constexpr std::string_view open = "<answer>";
    constexpr std::string_view close = "</answer>";
    auto end = raw_text.rfind(close);
    while (end != std::string_view::npos) {
        const auto start = raw_text.rfind(open, end);
        if (start != std::string_view::npos && start + open.size() <= end)
            return std::string(trim(raw_text.substr(start + open.size(), end - start - open.size())));
        if (end == 0) break;
        end = raw_text.rfind(close, end - 1);
    }
    return std::nullopt;
}

std::optional<MatchVerdict> match_deterministic(std::string_view prediction, const GroundTruth& gt) {
    if (trim(prediction).empty()) throw InvalidInput("prediction must be nonempty");

    if (gt.kind == GroundTruthKind::OpenEnded) {
        const auto p = normalize_open(prediction);
        if (!p.empty() && p == normalize_open(gt.value)) return MatchVerdict{true, MatchMethod::Deterministic, {}};
        return std::nullopt;
    }

    const auto label = unambiguous_label(prediction);
    if (!label) return std::nullopt;
    return MatchVerdict{*label == gt.value.front(), MatchMethod::Deterministic, {}};
}

std::string canonical_answer(std::string_view answer) {
    if (!trim(answer).empty()) {
        if (auto label = unambiguous_label(answer, true)) return std::string(1, *label);
    }
    return normalize_open(answer);
}

std::string render_match_prompt(std::string_view prediction, const GroundTruth& gt) {
    return prompts::fill(prompts::kAnswerMatching, {{"<answer>", gt.value}, {"<prediction>", prediction}});
}

std::optional<bool> parse_yes_no(std::string_view reply) {
    std::string word;
    for (unsigned char c : trim(reply)) word.push_back(static_cast<char>(std::tolower(c)));
    const auto strip = [](unsigned char c) { return std::ispunct(c) != 0 || std::isspace(c) != 0; };
    while (!word.empty() && strip(static_cast<unsigned char>(word.back()))) word.pop_back();
    std::size_t lead = 0;
    while (lead < word.size() && strip(static_cast<unsigned char>(word[lead]))) ++lead;
    word.erase(0, lead);
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

MatchVerdict match_with_judge(std::string_view prediction, const GroundTruth& gt, const TextCompleter& judge) {
    if (auto v = match_deterministic(prediction, gt)) return *v;

    const auto prompt = render_match_prompt(prediction, gt);
    std::string transcript;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = judge(prompt);
        if (!transcript.empty()) transcript += "\n---\n";
        transcript += reply;
        if (auto yes = parse_yes_no(reply)) return MatchVerdict{*yes, MatchMethod::JudgeDelegated, transcript};
    }
    throw VerificationFailed("answer-matching judge did not reply yes/no: " + transcript);
}

void verify_rollout(RolloutRecord& record, const GroundTruth& gt, const TextCompleter* judge) {
    record.verdict = Verdict::Unverified;
    record.verify_method.clear();
    record.judge_raw.reset();
    if (!record.error.empty() && record.raw_text.empty()) return;  // transport failure, nothing to verify

    record.extracted_answer = extract_answer(record.raw_text);
    if (!record.extracted_answer || record.extracted_answer->empty()) {
        record.extracted_answer.reset();
        record.error = "no <answer> block";
        return;
    }
    try {
        std::optional<MatchVerdict> v =
            judge ? match_with_judge(*record.extracted_answer, gt, *judge) : match_deterministic(*record.extracted_answer, gt);
        if (!v) {
            record.error = "undecidable without an answer-matching judge";
            return;
        }
        record.verdict = v->matched ? Verdict::Correct : Verdict::Incorrect;
        record.verify_method = std::string(to_string(v->method));
        record.judge_raw = v->judge_raw;
        record.error.clear();
    } catch (const VerificationFailed& e) {
        record.error = e.what();
    } catch (const TransportError& e) {
        record.error = std::string("answer-matching judge unreachable: ") + e.what();
    }
}

}  // namespace prefjudge
