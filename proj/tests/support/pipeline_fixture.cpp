#include "pipeline_fixture.hpp"

#include <cctype>
#include <fstream>

#include "prefjudge/datastore.hpp"
#include "prefjudge/random.hpp"

namespace prefjudge::testing {

namespace {

constexpr const char* kVocab[] = {"the", "clip", "shows", "a", "person", "moving", "toward", "an", "object", "then"};

std::string filler(std::size_t n) {
    std::string out;
    for (std::size_t k = 0; k < n; ++k) {
        if (k) out.push_back(' ');
        out += kVocab[k % 10];
    }
    return out;
}

std::string with_answer(std::size_t n, const std::string& answer) { return filler(n) + " <answer>" + answer + "</answer>"; }

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string rollout_text(int i, int model, int r) {
    const bool choice = i % 2 == 0;
    auto correct_answer = [&] {
        if (choice) return std::string(r % 2 == 0 ? "B" : "The answer is B");
        return std::string(r % 2 == 0 ? "red ball" : "It is the red ball");
    };
    auto wrong_answer = [&] {
        if (choice) return std::string(r % 2 == 0 ? "C" : "(D) the other option");
        return std::string("blue cup");
    };
    switch (i) {
        case 0:
        case 1: return with_answer(20 + r, correct_answer());
        case 2:
        case 3: return with_answer(20 + r, wrong_answer());
        case 4: return r % 2 == 0 ? with_answer(8, correct_answer()) : with_answer(30, wrong_answer());
        case 5: return r % 2 == 0 ? "<answer>" + correct_answer() + "</answer> ok" : with_answer(20, wrong_answer());
        case 6: return filler(20 + r);
        default: break;
    }
    const std::size_t n = 18 + 2 * r + model + i % 3;
    return (r + model + i) % 2 == 0 ? with_answer(n, correct_answer()) : with_answer(n, wrong_answer());
}

std::string between(const std::string& s, const std::string& open, const std::string& close) {
    const auto a = s.find(open);
    if (a == std::string::npos) return {};
    const auto b = s.find(close, a + open.size());
    return s.substr(a + open.size(), b == std::string::npos ? std::string::npos : b - a - open.size());
}

}  // namespace

std::vector<Sample> pipeline_samples() {
    constexpr Dimension dims[] = {Dimension::GeneralVideoUnderstanding, Dimension::VideoReasoning,
                                  Dimension::LongVideoUnderstanding};
    constexpr double durations[] = {12.0, 45.5, 150.0, 600.0, 29.75};
    std::vector<Sample> out;
    for (std::size_t i = 0; i < kPipelineSamples; ++i) {
        Sample s;
        char id[8];
        std::snprintf(id, sizeof id, "s%02zu", i);
        s.sample_id = id;
        s.question = "Question " + std::to_string(i) + ": what does the person pick up?";
        s.ground_truth = i % 2 == 0 ? GroundTruth::choice("B") : GroundTruth::open_ended("red ball");
        s.duration_seconds = durations[i % 5];
        s.dimension = dims[i % 3];
        out.push_back(std::move(s));
    }
    return out;
}

void write_pipeline_samples(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    for (const auto& s : pipeline_samples()) f << canonical_dump(nlohmann::json(s)) << '\n';
}

MockReply pipeline_responder(const nlohmann::json& body) {
    const auto model = body.value("model", std::string());
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    const auto& meta = body.contains("metadata") ? body["metadata"] : nlohmann::json::object();

    if (model == "mock-judge") {
        if (meta.contains("pair_id")) {
            const auto h = derive_seed(0, {meta["pair_id"].get<std::string>(),
                                           std::to_string(meta["trial_index"].get<int>())});
            return {200, std::string("Comparing both. [answer]") + (h % 3 == 0 ? "2" : "1") + "[/answer]"};
        }
        const auto gt = lower(between(prompt, "GT answer: ", "\n"));
        const auto pred = lower(between(prompt, "Prediction: ", "\n\n"));
        return {200, pred.find(gt) != std::string::npos ? "yes" : "no"};
    }

    const int m = model == "mock-a" ? 0 : model == "mock-b" ? 1 : -1;
    if (m < 0 || !meta.contains("sample_id")) return {400, "unexpected request"};
    const auto id = meta["sample_id"].get<std::string>();
    const int i = std::stoi(id.substr(1));
    return {200, rollout_text(i, m, meta["rollout_index"].get<int>())};
}

nlohmann::json pipeline_config(const std::string& base_url, std::uint64_t seed) {
    auto endpoint = [&](const char* name, const char* model, int par) {
        return nlohmann::json{{"name", name}, {"base_url", base_url}, {"model_id", model}, {"max_parallel", par}};
    };
    return {{"seed", seed},
            {"endpoints", {endpoint("model-a", "mock-a", 2), endpoint("model-b", "mock-b", 2), endpoint("judge", "mock-judge", 2)}},
            {"retry", {{"max_retries", 0}, {"base_delay_ms", 1}, {"multiplier", 1.0}, {"jitter", false}}},
            {"rollout", {{"n-per-model", 4}, {"endpoint", {"model-a", "model-b"}}, {"match-judge", "judge"}}},
            {"pair", {{"tau", 0.25}, {"min-words", 5}}}};
}

}  // namespace prefjudge::testing
