#include "prefjudge/bon.hpp"

#include <sstream>
#include <unordered_map>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/random.hpp"
#include "prefjudge/verifier.hpp"

namespace prefjudge {

void CandidateSet::validate() const {
    if (candidates.empty()) throw InvalidInput("candidate set " + sample_id + " is empty");
    for (const auto& c : candidates) {
        if (c.sample_id != sample_id)
            throw InvalidInput("candidate from sample " + c.sample_id + " in set " + sample_id);
    }
}

CandidateSet CandidateSet::prefix(std::size_t n) const {
    CandidateSet out{sample_id, question, ground_truth, {}};
    out.candidates.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(std::min(n, candidates.size())));
    return out;
}

void to_json(nlohmann::json& j, const CandidateSet& s) {
    j = with_schema_version({{"sample_id", s.sample_id},
                             {"question", s.question},
                             {"ground_truth", s.ground_truth},
                             {"candidates", s.candidates}});
}

void from_json(const nlohmann::json& j, CandidateSet& s) {
    j.at("sample_id").get_to(s.sample_id);
    j.at("question").get_to(s.question);
    j.at("ground_truth").get_to(s.ground_truth);
    j.at("candidates").get_to(s.candidates);
}

Selection bon_pointwise(const CandidateSet& set, const PointwiseScorer& scorer) {
    set.validate();
    Selection sel;
    if (set.candidates.size() == 1) return sel;
    double best = scorer(set.question, set.candidates[0]);
    for (std::size_t i = 1; i < set.candidates.size(); ++i) {
        const double s = scorer(set.question, set.candidates[i]);
        if (s > best) {
            best = s;
            sel.index = i;
        }
    }
    return sel;
}

namespace {

// Judges a against b in a random order; returns the winner index or nullopt
// when the verdict is unusable.
std::optional<std::size_t> duel(const CandidateSet& set, std::size_t a, std::size_t b, const PairwiseJudge& judge,
                                const PickParser& parser, Rng& rng, std::uint32_t call_index, Selection& sel) {
    const bool a_first = fair_coin(rng);
    const std::size_t first = a_first ? a : b;
    const std::size_t second = a_first ? b : a;
    ++sel.judge_calls;
    try {
        const auto raw = judge(JudgeQuery{set.question, set.candidates[first].raw_text, set.candidates[second].raw_text,
                                          set.sample_id, call_index});
        switch (parser(raw)) {
            case Pick::First: return first;
            case Pick::Second: return second;
            case Pick::Invalid: return std::nullopt;
        }
    } catch (const TransportError& e) {
        sel.flagged = true;
        sel.note = e.what();
    }
    return std::nullopt;
}

}  // namespace

Selection bon_pairwise(const CandidateSet& set, const PairwiseJudge& judge, const PairwiseBonOptions& options) {
    set.validate();
    Selection sel;
    const std::size_t n = set.candidates.size();
    if (n == 1) return sel;
    auto rng = make_rng(options.seed, {"bon", set.sample_id});
    std::uint32_t call = 0;

    if (options.mode == PairwiseMode::Knockout) {
        std::size_t champion = 0;
        for (std::size_t challenger = 1; challenger < n; ++challenger) {
            if (auto w = duel(set, champion, challenger, judge, options.parser, rng, call++, sel)) champion = *w;
        }
        sel.index = champion;
        return sel;
    }

    std::vector<std::size_t> wins(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (auto w = duel(set, i, j, judge, options.parser, rng, call++, sel)) ++wins[*w];
        }
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (wins[i] > wins[sel.index]) sel.index = i;
    }
    return sel;
}

Selection majority_of_n(const CandidateSet& set) {
    set.validate();
    struct Group {
        std::size_t first;
        std::size_t count;
    };
    std::unordered_map<std::string, Group> groups;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < set.candidates.size(); ++i) {
        const auto& c = set.candidates[i];
        auto answer = c.extracted_answer ? c.extracted_answer : extract_answer(c.raw_text);
        if (!answer || answer->empty()) continue;
        auto key = canonical_answer(*answer);
        auto [it, inserted] = groups.try_emplace(key, Group{i, 0});
        if (inserted) order.push_back(key);
        ++it->second.count;
    }
    Selection sel;
    if (order.empty()) {
        sel.flagged = true;
        sel.note = "no extractable answers";
        return sel;
    }
    const Group* best = &groups.at(order.front());
    for (const auto& key : order) {
        const Group& g = groups.at(key);
        if (g.count > best->count) best = &g;
    }
    sel.index = best->first;
    return sel;
}

BonCurve bon_sweep(const std::vector<CandidateSet>& sets, const std::map<std::string, Selector>& strategies,
                   const std::vector<std::size_t>& n_values) {
    BonCurve curve;
    curve.n_values = n_values;
    for (std::size_t n : n_values) {
        if (n == 0) throw InvalidInput("N must be positive");
        std::vector<const CandidateSet*> eligible;
        for (const auto& s : sets) {
            if (s.candidates.size() >= n) eligible.push_back(&s);
        }
        curve.sets_evaluated[n] = eligible.size();
        if (eligible.empty()) continue;
        for (const auto& [name, select] : strategies) {
            std::size_t hits = 0;
            for (const auto* s : eligible) {
                const auto sub = s->prefix(n);
                const auto sel = select(sub);
                if (sub.candidates.at(sel.index).verdict == Verdict::Correct) ++hits;
            }
            curve.accuracy[name][n] = static_cast<double>(hits) / static_cast<double>(eligible.size());
        }
    }
    return curve;
}

nlohmann::json to_json(const BonCurve& curve) {
    nlohmann::json strategies = nlohmann::json::object();
    for (const auto& [name, by_n] : curve.accuracy) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [n, acc] : by_n) row[std::to_string(n)] = acc;
        strategies[name] = row;
    }
    nlohmann::json sets = nlohmann::json::object();
    for (const auto& [n, count] : curve.sets_evaluated) sets[std::to_string(n)] = count;
    return with_schema_version({{"n_values", curve.n_values}, {"accuracy", strategies}, {"sets_evaluated", sets}});
}

std::string to_csv(const BonCurve& curve) {
    std::ostringstream out;
    out << "strategy,n,accuracy,sets\n";
    for (const auto& [name, by_n] : curve.accuracy) {
        for (const auto& [n, acc] : by_n) out << name << ',' << n << ',' << acc << ',' << curve.sets_evaluated.at(n) << '\n';
    }
    return out.str();
}

}  // namespace prefjudge
