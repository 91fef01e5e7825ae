#include "prefjudge/simulation.hpp"

#include <cmath>
#include <string>

#include "prefjudge/random.hpp"
#include "prefjudge/verifier.hpp"

namespace prefjudge::sim {

namespace {

constexpr Dimension kDims[] = {Dimension::GeneralVideoUnderstanding, Dimension::VideoReasoning,
                               Dimension::LongVideoUnderstanding};

std::string pick_text(bool first) { return first ? "[answer]1[/answer]" : "[answer]2[/answer]"; }

}  // namespace

std::vector<PreferencePair> synthetic_pairs(std::size_t n, std::uint64_t seed) {
    std::vector<PreferencePair> pairs;
    pairs.reserve(n);
    auto rng = make_rng(seed, {"synthetic_pairs"});
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn-%06zu", i);
        PreferencePair p;
        p.pair_id = std::string("pair-") + id;
        p.sample_id = id;
        p.question = "Synthetic question " + std::to_string(i);
        p.frame_spec = base_spec(60.0);
        p.dimension = kDims[i % 3];
        p.chosen.sample_id = p.rejected.sample_id = id;
        p.chosen.model_name = "sim";
        p.rejected.model_name = "sim";
        p.rejected.rollout_index = 1;
        p.chosen.raw_text = "chosen response " + std::to_string(rng() % 1000) + " <answer>A</answer>";
        p.rejected.raw_text = "rejected response " + std::to_string(rng() % 1000) + " <answer>B</answer>";
        p.chosen.extracted_answer = "A";
        p.rejected.extracted_answer = "B";
        p.chosen.verdict = Verdict::Correct;
        p.rejected.verdict = Verdict::Incorrect;
        p.chosen_len = 4;
        p.rejected_len = 4;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

bool is_synthetic_chosen(std::string_view text) { return text.rfind("chosen", 0) == 0; }

PairwiseJudge always_first_judge() {
    return [](const JudgeQuery&) { return std::string("Response 1 reads better. [answer]1[/answer]"); };
}

PairwiseJudge invalid_judge() {
    return [](const JudgeQuery&) { return std::string("I cannot decide between these."); };
}

PairwiseJudge order_invariant_judge(double p, std::uint64_t seed, std::function<bool(std::string_view)> preferred) {
    return [p, seed, preferred = std::move(preferred)](const JudgeQuery& q) {
        auto rng = make_rng(seed, {"judge", q.pair_id, std::to_string(q.trial_index)});
        const bool first_is_preferred = preferred(q.response_1);
        const bool right = uniform01(rng) < p;
        return pick_text(right == first_is_preferred);
    };
}

std::vector<CandidateSet> synthetic_candidate_sets(std::size_t n_sets, std::size_t n_candidates, double p,
                                                   std::uint64_t seed) {
    std::vector<CandidateSet> sets;
    sets.reserve(n_sets);
    auto rng = make_rng(seed, {"synthetic_candidates"});
    for (std::size_t s = 0; s < n_sets; ++s) {
        CandidateSet set;
        set.sample_id = "bon-" + std::to_string(s);
        set.question = "Which option? " + std::to_string(s);
        set.ground_truth = GroundTruth::choice("A");
        for (std::size_t c = 0; c < n_candidates; ++c) {
            const bool correct = uniform01(rng) < p;
            RolloutRecord r;
            r.sample_id = set.sample_id;
            r.model_name = "sim";
            r.rollout_index = static_cast<std::uint32_t>(c);
            r.raw_text = std::string("reasoning step ") + std::to_string(c) + " <answer>" + (correct ? "A" : "B") +
                         "</answer>";
            r.extracted_answer = correct ? "A" : "B";
            r.verdict = correct ? Verdict::Correct : Verdict::Incorrect;
            set.candidates.push_back(std::move(r));
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

PointwiseScorer oracle_scorer() {
    return [](std::string_view, const RolloutRecord& r) { return r.verdict == Verdict::Correct ? 1.0 : 0.0; };
}

std::function<bool(std::string_view)> answers(std::string answer) {
    return [answer = std::move(answer)](std::string_view text) {
        const auto a = extract_answer(text);
        return a && *a == answer;
    };
}

double majority_accuracy(double p, std::uint32_t n, double tie_weight) {
    double total = 0.0;
    for (std::uint32_t k = 0; k <= n; ++k) {
        const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                               (k > 0 ? k * std::log(p) : 0.0) + (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0);
        const double pmf = std::exp(log_pmf);
        if (2 * k > n)
            total += pmf;
        else if (2 * k == n)
            total += tie_weight * pmf;
    }
    return total;
}

}  // namespace prefjudge::sim
