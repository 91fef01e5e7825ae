#include "prefjudge/pairs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/random.hpp"

namespace prefjudge {

void FilterConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in (0, 1)");
    if (min_words < 1) throw InvalidInput("min_words must be positive");
}

std::uint64_t word_count(std::string_view text) {
    std::uint64_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

bool length_compatible(std::uint64_t l1, std::uint64_t l2, double tau) {
    if (l1 == 0 || l2 == 0) throw InvalidInput("response lengths must be positive");
    // Cross-multiplied to keep the boundary exact: |l1 - l2| < tau * min.
    const auto diff = static_cast<double>(l1 > l2 ? l1 - l2 : l2 - l1);
    return diff < tau * static_cast<double>(std::min(l1, l2));
}

std::string_view to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::AllCorrect: return "AllCorrect";
        case DiscardReason::AllIncorrect: return "AllIncorrect";
        case DiscardReason::NoLengthCompatiblePair: return "NoLengthCompatiblePair";
        case DiscardReason::Unverified: return "Unverified";
        case DiscardReason::TooShort: return "TooShort";
    }
    return "Unverified";
}

std::size_t DiscardReport::total_discarded() const {
    std::size_t n = 0;
    for (const auto& [_, count] : discarded) n += count;
    return n;
}

nlohmann::json to_json(const DiscardReport& report) {
    nlohmann::json reasons = nlohmann::json::object();
    for (auto r : {DiscardReason::AllCorrect, DiscardReason::AllIncorrect, DiscardReason::NoLengthCompatiblePair,
                   DiscardReason::Unverified, DiscardReason::TooShort}) {
        const auto it = report.discarded.find(r);
        reasons[std::string(to_string(r))] = it == report.discarded.end() ? 0 : it->second;
    }
    return with_schema_version({{"samples", report.samples},
                                {"pairs", report.pairs},
                                {"discarded", reasons},
                                {"unverified_records", report.unverified_records}});
}

PairBuildResult build_pairs(const std::vector<Sample>& samples, const std::vector<RolloutRecord>& rollouts,
                            const FilterConfig& config, std::uint64_t seed) {
    config.validate();

    std::unordered_map<std::string, std::vector<const RolloutRecord*>> by_sample;
    for (const auto& r : rollouts) by_sample[r.sample_id].push_back(&r);

    std::vector<const Sample*> ordered;
    for (const auto& s : samples) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->sample_id < b->sample_id; });
    if (std::adjacent_find(ordered.begin(), ordered.end(), [](auto* a, auto* b) {
            return a->sample_id == b->sample_id;
        }) != ordered.end())
        throw InvalidInput("duplicate sample_id in sample list");

    PairBuildResult out;
    out.report.samples = ordered.size();
    auto discard = [&](DiscardReason r) { ++out.report.discarded[r]; };

    for (const Sample* sample : ordered) {
        auto records = by_sample[sample->sample_id];
        // Canonical candidate order, independent of file order.
        std::sort(records.begin(), records.end(), [](auto* a, auto* b) {
            return std::tie(a->model_name, a->rollout_index) < std::tie(b->model_name, b->rollout_index);
        });

        std::vector<const RolloutRecord*> correct, incorrect;
        for (const auto* r : records) {
            if (r->verdict == Verdict::Correct)
                correct.push_back(r);
            else if (r->verdict == Verdict::Incorrect)
                incorrect.push_back(r);
            else
                ++out.report.unverified_records;
        }
        if (correct.empty() && incorrect.empty()) {
            discard(DiscardReason::Unverified);
            continue;
        }
        if (incorrect.empty()) {
            discard(DiscardReason::AllCorrect);
            continue;
        }
        if (correct.empty()) {
            discard(DiscardReason::AllIncorrect);
            continue;
        }

        auto long_enough = [&](const RolloutRecord* r) { return word_count(r->raw_text) >= config.min_words; };
        std::erase_if(correct, [&](auto* r) { return !long_enough(r); });
        std::erase_if(incorrect, [&](auto* r) { return !long_enough(r); });
        if (correct.empty() || incorrect.empty()) {
            discard(DiscardReason::TooShort);
            continue;
        }

        std::vector<std::pair<const RolloutRecord*, const RolloutRecord*>> candidates;
        for (const auto* c : correct) {
            for (const auto* r : incorrect) {
                if (length_compatible(word_count(c->raw_text), word_count(r->raw_text), config.tau))
                    candidates.emplace_back(c, r);
            }
        }
        if (candidates.empty()) {
            discard(DiscardReason::NoLengthCompatiblePair);
            continue;
        }

        auto rng = make_rng(seed, {"pair", sample->sample_id});
        const auto [chosen, rejected] = candidates[uniform_index(rng, candidates.size())];

        PreferencePair p;
        p.pair_id = "pair-" + sample->sample_id;
        p.sample_id = sample->sample_id;
        p.question = sample->question;
        p.frame_spec = base_spec(sample->duration_seconds);
        p.chosen = *chosen;
        p.rejected = *rejected;
        p.dimension = sample->dimension;
        p.chosen_len = word_count(chosen->raw_text);
        p.rejected_len = word_count(rejected->raw_text);
        check_pair_invariants(p, config.tau);
        out.pairs.push_back(std::move(p));
    }
    out.report.pairs = out.pairs.size();
    return out;
}

void check_pair_invariants(const PreferencePair& pair, double tau) {
    auto fail = [&](const std::string& why) { throw DataIntegrityError("pair " + pair.pair_id + ": " + why); };
    if (pair.chosen.verdict != Verdict::Correct) fail("chosen response is not Correct");
    if (pair.rejected.verdict != Verdict::Incorrect) fail("rejected response is not Incorrect");
    if (pair.chosen.sample_id != pair.sample_id || pair.rejected.sample_id != pair.sample_id)
        fail("chosen and rejected come from different samples");
    if (pair.chosen_len == 0 || pair.rejected_len == 0) fail("zero-length response");
    if (!length_compatible(pair.chosen_len, pair.rejected_len, tau)) fail("length ratio not below tau");
}

}  // namespace prefjudge
