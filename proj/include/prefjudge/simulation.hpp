#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "prefjudge/bon.hpp"
#include "prefjudge/eval.hpp"
#include "prefjudge/records.hpp"

// Synthetic judges and datasets for protocol experiments that need no model.
namespace prefjudge::sim {

// n pairs whose chosen text starts with "chosen" and rejected with
// "rejected"; dimensions cycle through the three video dimensions.
std::vector<PreferencePair> synthetic_pairs(std::size_t n, std::uint64_t seed);

bool is_synthetic_chosen(std::string_view text);

// Always answers "[answer]1[/answer]".
PairwiseJudge always_first_judge();

// Never emits a parseable verdict.
PairwiseJudge invalid_judge();

// Prefers the response for which `preferred` holds with probability p,
// regardless of its position. Randomness is derived from (seed, pair_id,
// trial_index) so results do not depend on call order.
PairwiseJudge order_invariant_judge(double p, std::uint64_t seed,
                                    std::function<bool(std::string_view)> preferred = is_synthetic_chosen);

// Candidate sets with i.i.d. correctness p; correct candidates answer "A",
// wrong ones "B". Ground truth is choice label A.
std::vector<CandidateSet> synthetic_candidate_sets(std::size_t n_sets, std::size_t n_candidates, double p,
                                                   std::uint64_t seed);

// 1 for Correct candidates, 0 otherwise.
PointwiseScorer oracle_scorer();

// Prefers responses whose <answer> block equals `answer`.
std::function<bool(std::string_view)> answers(std::string answer);

// P[X > n/2] for X ~ Binomial(n, p), plus `tie_weight` * P[X = n/2].
double majority_accuracy(double p, std::uint32_t n, double tie_weight = 0.0);

}  // namespace prefjudge::sim
