#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefjudge/eval.hpp"
#include "prefjudge/records.hpp"

namespace prefjudge {

struct CandidateSet {
    std::string sample_id;
    std::string question;
    GroundTruth ground_truth;
    std::vector<RolloutRecord> candidates;

    // Throws InvalidInput on an empty set or mixed sample ids.
    void validate() const;
    // First n candidates (n clamped to the set size).
    CandidateSet prefix(std::size_t n) const;
};

void to_json(nlohmann::json& j, const CandidateSet& s);
void from_json(const nlohmann::json& j, CandidateSet& s);

struct Selection {
    std::size_t index = 0;
    std::size_t judge_calls = 0;
    bool flagged = false;
    std::string note;
};

// Highest score; ties go to the lowest index.
Selection bon_pointwise(const CandidateSet& set, const PointwiseScorer& scorer);

enum class PairwiseMode { Knockout, RoundRobin };

struct PairwiseBonOptions {
    PairwiseMode mode = PairwiseMode::Knockout;
    std::uint64_t seed = 0;
    PickParser parser = parse_pick;
};

// Knockout: candidate 0 starts as champion, each challenger is judged against
// it in a seeded random order and the pick becomes champion; Invalid picks and
// transport failures keep the champion. N-1 judge calls. RoundRobin judges
// every pair once and selects the most wins (lowest index on ties).
Selection bon_pairwise(const CandidateSet& set, const PairwiseJudge& judge, const PairwiseBonOptions& options = {});

// Earliest candidate of the largest group of equal normalized answers; group
// ties go to the group that appears first. Flagged candidate 0 when no
// candidate has an answer.
Selection majority_of_n(const CandidateSet& set);

// Pairwise selection with the generating model acting as its own judge.
inline Selection self_judge(const CandidateSet& set, const PairwiseJudge& generator_as_judge,
                            const PairwiseBonOptions& options = {}) {
    return bon_pairwise(set, generator_as_judge, options);
}

using Selector = std::function<Selection(const CandidateSet&)>;

struct BonCurve {
    std::vector<std::size_t> n_values;
    // strategy -> N -> accuracy over the sets that have at least N candidates
    std::map<std::string, std::map<std::size_t, double>> accuracy;
    std::map<std::size_t, std::size_t> sets_evaluated;
};

// Runs each strategy on the first-N prefix of every set, N in n_values.
// A selection is correct when the chosen candidate's verdict is Correct.
BonCurve bon_sweep(const std::vector<CandidateSet>& sets, const std::map<std::string, Selector>& strategies,
                   const std::vector<std::size_t>& n_values = {1, 2, 4, 6, 8});

nlohmann::json to_json(const BonCurve& curve);
std::string to_csv(const BonCurve& curve);

}  // namespace prefjudge
