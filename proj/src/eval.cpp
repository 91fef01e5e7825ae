#include "prefjudge/eval.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/parallel.hpp"
#include "prefjudge/prompts.hpp"
#include "prefjudge/random.hpp"

namespace prefjudge {

std::string_view to_string(Pick p) {
    switch (p) {
        case Pick::First: return "First";
        case Pick::Second: return "Second";
        case Pick::Invalid: return "Invalid";
    }
    return "Invalid";
}

std::string_view to_string(Order o) {
    return o == Order::ChosenFirst ? "ChosenFirst" : "RejectedFirst";
}

std::string_view to_string(OrderPolicy p) {
    return p == OrderPolicy::RandomSwap ? "RandomSwap" : "Balanced";
}

OrderPolicy order_policy_from_string(std::string_view name) {
    if (name == "random" || name == "RandomSwap") return OrderPolicy::RandomSwap;
    if (name == "balanced" || name == "Balanced") return OrderPolicy::Balanced;
    throw InvalidInput("unknown order policy: " + std::string(name));
}

std::string render_judge_prompt(std::string_view question, std::string_view response_1, std::string_view response_2,
                                std::string_view tmpl) {
    if (question.empty() || response_1.empty() || response_2.empty())
        throw InvalidInput("judge prompt fields must be nonempty");
    return prompts::fill(tmpl.empty() ? prompts::kPairwiseJudge : tmpl,
                         {{"<question>", question}, {"<response 1>", response_1}, {"<response 2>", response_2}});
}

Pick parse_pick(std::string_view raw) {
    constexpr std::string_view open = "[answer]";
    constexpr std::string_view close = "[/answer]";
    const auto end = raw.rfind(close);
    if (end == std::string_view::npos) return Pick::Invalid;
    const auto start = raw.rfind(open, end);
    if (start == std::string_view::npos || start + open.size() > end) return Pick::Invalid;
    auto body = raw.substr(start + open.size(), end - start - open.size());
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    if (body == "1") return Pick::First;
    if (body == "2") return Pick::Second;
    return Pick::Invalid;
}

std::string load_prompt_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto text = std::move(ss).str();
    for (std::string_view slot : {"<question>", "<response 1>", "<response 2>"}) {
        if (text.find(slot) == std::string::npos)
            throw InvalidInput("prompt template " + path.string() + " lacks placeholder " + std::string(slot));
    }
    return text;
}

PairwiseJudge make_endpoint_judge(std::shared_ptr<ChatClient> client, std::string prompt_template,
                                  GenerationParams params) {
    return [client = std::move(client), tmpl = std::move(prompt_template), params](const JudgeQuery& q) {
        ChatRequest request{render_judge_prompt(q.question, q.response_1, q.response_2, tmpl), params,
                            nlohmann::json{{"pair_id", q.pair_id}, {"trial_index", q.trial_index}}};
        return client->complete(request);
    };
}

nlohmann::json to_json(const TrialRecord& t) {
    nlohmann::json j{{"pair_id", t.pair_id},
                     {"trial_index", t.trial_index},
                     {"order", to_string(t.order)},
                     {"raw_output", t.raw_output},
                     {"pick", to_string(t.pick)}};
    if (!t.error.empty()) j["error"] = t.error;
    return with_schema_version(std::move(j));
}

Metrics compute_metrics(const std::vector<bool>& correct, const std::vector<Dimension>& dimensions) {
    if (correct.empty()) throw InvalidInput("cannot compute metrics over zero pairs");
    if (correct.size() != dimensions.size()) throw InvalidInput("every pair needs a dimension label");

    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // label -> (correct, total)
    std::size_t hits = 0;
    for (std::size_t i = 0; i < correct.size(); ++i) {
        auto& [c, t] = tally[std::string(to_string(dimensions[i]))];
        ++t;
        if (correct[i]) {
            ++c;
            ++hits;
        }
    }
    Metrics m;
    m.overall = static_cast<double>(hits) / static_cast<double>(correct.size());
    double sum = 0.0;
    for (const auto& [label, ct] : tally) {
        const double acc = static_cast<double>(ct.first) / static_cast<double>(ct.second);
        m.per_dimension[label] = acc;
        sum += acc;
    }
    m.macro = sum / static_cast<double>(tally.size());
    return m;
}

nlohmann::json to_json(const EvalResult& r) {
    nlohmann::json per_pair = nlohmann::json::array();
    for (const auto& p : r.per_pair) {
        nlohmann::json j{{"pair_id", p.pair_id},
                         {"dimension", to_string(p.dimension)},
                         {"votes_for_chosen", p.votes_for_chosen},
                         {"votes_for_rejected", p.votes_for_rejected},
                         {"invalid_count", p.invalid_count},
                         {"correct", p.correct},
                         {"flagged", p.flagged}};
        if (p.score_chosen) j["score_chosen"] = *p.score_chosen;
        if (p.score_rejected) j["score_rejected"] = *p.score_rejected;
        per_pair.push_back(std::move(j));
    }
    nlohmann::json j{{"protocol", r.protocol},
                     {"pairs", r.per_pair.size()},
                     {"overall_accuracy", r.metrics.overall},
                     {"macro_accuracy", r.metrics.macro},
                     {"per_dimension_accuracy", r.metrics.per_dimension},
                     {"per_pair", std::move(per_pair)}};
    if (r.protocol == "pairwise") j["n_trials"] = r.n_trials;
    if (r.order_policy) j["order_policy"] = to_string(*r.order_policy);
    if (r.seed) j["seed"] = *r.seed;
    return with_schema_version(std::move(j));
}

std::vector<Order> trial_orders(std::string_view pair_id, std::uint32_t n_trials, OrderPolicy policy,
                                std::uint64_t seed) {
    auto rng = make_rng(seed, {"order", pair_id});
    std::vector<Order> orders(n_trials, Order::ChosenFirst);
    if (policy == OrderPolicy::RandomSwap) {
        for (auto& o : orders) o = fair_coin(rng) ? Order::RejectedFirst : Order::ChosenFirst;
        return orders;
    }
    for (std::uint32_t i = n_trials / 2; i < n_trials; ++i) orders[i] = Order::RejectedFirst;
    for (std::size_t i = orders.size(); i > 1; --i) std::swap(orders[i - 1], orders[uniform_index(rng, i)]);
    return orders;
}

namespace {

Metrics metrics_for(const std::vector<PairOutcome>& outcomes) {
    std::vector<bool> correct;
    std::vector<Dimension> dims;
    for (const auto& o : outcomes) {
        correct.push_back(o.correct);
        dims.push_back(o.dimension);
    }
    return compute_metrics(correct, dims);
}

}  // namespace

EvalResult eval_pairwise(const std::vector<PreferencePair>& pairs, const PairwiseJudge& judge,
                         const PairwiseOptions& options) {
    const std::uint32_t n = options.n_trials;
    if (n < 2 || n % 2 != 0) throw InvalidInput("n_trials must be an even integer >= 2");
    if (pairs.empty()) throw InvalidInput("no pairs to evaluate");

    EvalResult result;
    result.protocol = "pairwise";
    result.n_trials = n;
    result.order_policy = options.order_policy;
    result.seed = options.seed;
    result.trials.resize(pairs.size() * n);

    std::vector<std::vector<Order>> orders;
    orders.reserve(pairs.size());
    for (const auto& p : pairs) orders.push_back(trial_orders(p.pair_id, n, options.order_policy, options.seed));

    parallel_for(result.trials.size(), options.workers, [&](std::size_t slot) {
        const auto& pair = pairs[slot / n];
        const auto trial = static_cast<std::uint32_t>(slot % n);
        TrialRecord& t = result.trials[slot];
        t.pair_id = pair.pair_id;
        t.trial_index = trial;
        t.order = orders[slot / n][trial];
        const bool chosen_first = t.order == Order::ChosenFirst;
        const auto& first = chosen_first ? pair.chosen.raw_text : pair.rejected.raw_text;
        const auto& second = chosen_first ? pair.rejected.raw_text : pair.chosen.raw_text;
        try {
            t.raw_output = judge(JudgeQuery{pair.question, first, second, pair.pair_id, trial});
            t.pick = options.parser(t.raw_output);
        } catch (const TransportError& e) {
            t.pick = Pick::Invalid;
            t.error = e.what();
        }
    });

    result.per_pair.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PairOutcome o;
        o.pair_id = pairs[i].pair_id;
        o.dimension = pairs[i].dimension;
        for (std::uint32_t k = 0; k < n; ++k) {
            const auto& t = result.trials[i * n + k];
            if (!t.error.empty()) o.flagged = true;
            if (t.pick == Pick::Invalid) {
                ++o.invalid_count;
                continue;
            }
            const bool picked_first = t.pick == Pick::First;
            const bool chosen_first = t.order == Order::ChosenFirst;
            if (picked_first == chosen_first)
                ++o.votes_for_chosen;
            else
                ++o.votes_for_rejected;
        }
        o.correct = 2 * o.votes_for_chosen > n;
        result.per_pair.push_back(std::move(o));
    }
    result.metrics = metrics_for(result.per_pair);
    return result;
}

EvalResult eval_pointwise(const std::vector<PreferencePair>& pairs, const PointwiseScorer& scorer,
                          std::size_t workers) {
    if (pairs.empty()) throw InvalidInput("no pairs to evaluate");
    EvalResult result;
    result.protocol = "pointwise";
    result.n_trials = 1;
    result.per_pair.resize(pairs.size());

    parallel_for(pairs.size(), workers, [&](std::size_t i) {
        const auto& pair = pairs[i];
        PairOutcome& o = result.per_pair[i];
        o.pair_id = pair.pair_id;
        o.dimension = pair.dimension;
        try {
            const double sc = scorer(pair.question, pair.chosen);
            const double sr = scorer(pair.question, pair.rejected);
            if (!std::isfinite(sc) || !std::isfinite(sr)) throw std::runtime_error("non-finite score");
            o.score_chosen = sc;
            o.score_rejected = sr;
            o.votes_for_chosen = sc > sr ? 1 : 0;
            o.votes_for_rejected = sr > sc ? 1 : 0;
            o.invalid_count = sc == sr ? 1 : 0;
            o.correct = sc > sr;
        } catch (const std::exception&) {
            o.flagged = true;
            o.invalid_count = 1;
            o.votes_for_chosen = o.votes_for_rejected = 0;
            o.correct = false;
        }
    });
    result.metrics = metrics_for(result.per_pair);
    return result;
}

}  // namespace prefjudge
