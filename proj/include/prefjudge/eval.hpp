#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefjudge/chat.hpp"
#include "prefjudge/records.hpp"

namespace prefjudge {

enum class Pick { First, Second, Invalid };
enum class Order { ChosenFirst, RejectedFirst };
enum class OrderPolicy { RandomSwap, Balanced };

std::string_view to_string(Pick p);
std::string_view to_string(Order o);
std::string_view to_string(OrderPolicy p);
OrderPolicy order_policy_from_string(std::string_view name);  // "random"/"balanced" or enum names

// Renders the unified pairwise judge template (or a custom one with the same
// <question>, <response 1>, <response 2> placeholders).
std::string render_judge_prompt(std::string_view question, std::string_view response_1, std::string_view response_2,
                                std::string_view tmpl = {});

// The last [answer]...[/answer] block decides; its trimmed content must be
// exactly "1" or "2", otherwise Invalid.
Pick parse_pick(std::string_view raw_output);

using PickParser = std::function<Pick(std::string_view)>;

// What a pairwise judge sees for one trial. pair_id and trial_index let
// simulated judges derive per-call randomness deterministically.
struct JudgeQuery {
    std::string_view question;
    std::string_view response_1;
    std::string_view response_2;
    std::string_view pair_id;
    std::uint32_t trial_index = 0;
};

// Returns the judge's raw text; throws TransportError on failure.
using PairwiseJudge = std::function<std::string(const JudgeQuery&)>;

// Prompt template and verdict parser for a judge; specialist judges register
// their own.
struct JudgeProtocol {
    std::string prompt_template;  // empty = unified template
    PickParser parser = parse_pick;
};

// Reads a template file; throws InvalidInput unless all three placeholders occur.
std::string load_prompt_template(const std::filesystem::path& path);

PairwiseJudge make_endpoint_judge(std::shared_ptr<ChatClient> client, std::string prompt_template = {},
                                  GenerationParams params = {});

// Scores a single response; exceptions or non-finite scores flag the pair.
using PointwiseScorer = std::function<double(std::string_view question, const RolloutRecord& response)>;

struct TrialRecord {
    std::string pair_id;
    std::uint32_t trial_index = 0;
    Order order = Order::ChosenFirst;
    std::string raw_output;
    Pick pick = Pick::Invalid;
    std::string error;
};

nlohmann::json to_json(const TrialRecord& t);

struct PairOutcome {
    std::string pair_id;
    Dimension dimension = Dimension::Other;
    std::uint32_t votes_for_chosen = 0;
    std::uint32_t votes_for_rejected = 0;
    std::uint32_t invalid_count = 0;
    bool correct = false;
    bool flagged = false;
    std::optional<double> score_chosen;
    std::optional<double> score_rejected;
};

struct Metrics {
    double overall = 0.0;
    std::map<std::string, double> per_dimension;
    double macro = 0.0;
};

// overall = correct / total; macro = unweighted mean over the dimensions
// present. Throws InvalidInput on empty input or a size mismatch.
Metrics compute_metrics(const std::vector<bool>& correct, const std::vector<Dimension>& dimensions);

struct EvalResult {
    std::string protocol;  // "pairwise" | "pointwise"
    std::uint32_t n_trials = 0;
    std::optional<OrderPolicy> order_policy;
    std::optional<std::uint64_t> seed;
    std::vector<PairOutcome> per_pair;
    Metrics metrics;
    std::vector<TrialRecord> trials;  // pairwise only; pair-major, trial-minor
};

nlohmann::json to_json(const EvalResult& r);

struct PairwiseOptions {
    std::uint32_t n_trials = 8;
    std::uint64_t seed = 0;
    OrderPolicy order_policy = OrderPolicy::RandomSwap;
    std::size_t workers = 1;
    PickParser parser = parse_pick;
};

// Presentation orders for one pair. RandomSwap: independent fair coins;
// Balanced: exactly n/2 of each order, shuffled. Pure in (seed, pair_id).
std::vector<Order> trial_orders(std::string_view pair_id, std::uint32_t n_trials, OrderPolicy policy,
                                std::uint64_t seed);

// Majority-voting protocol: n_trials judgments per pair, a pair is correct iff
// the chosen response wins strictly more than half of all trials. Invalid
// picks (including transport failures) count toward neither side.
// n_trials must be even and >= 2.
EvalResult eval_pairwise(const std::vector<PreferencePair>& pairs, const PairwiseJudge& judge,
                         const PairwiseOptions& options);

// Correct iff score(chosen) > score(rejected); ties are incorrect.
EvalResult eval_pointwise(const std::vector<PreferencePair>& pairs, const PointwiseScorer& scorer,
                          std::size_t workers = 1);

}  // namespace prefjudge
