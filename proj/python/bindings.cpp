#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "prefjudge/cli.hpp"
#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/eval.hpp"
#include "prefjudge/framespec.hpp"
#include "prefjudge/pairs.hpp"
#include "prefjudge/reward.hpp"
#include "prefjudge/simulation.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python side wraps these with json.
template <typename T>
std::vector<T> parse_list(const std::string& text) {
    return json::parse(text).get<std::vector<T>>();
}

py::tuple build_pairs_json(const std::string& samples, const std::string& rollouts, double tau,
                           std::uint64_t min_words, std::uint64_t seed) {
    prefjudge::FilterConfig cfg{tau, min_words};
    cfg.validate();
    const auto result =
        prefjudge::build_pairs(parse_list<prefjudge::Sample>(samples), parse_list<prefjudge::RolloutRecord>(rollouts), cfg, seed);
    return py::make_tuple(prefjudge::canonical_dump(json(result.pairs)),
                          prefjudge::canonical_dump(prefjudge::to_json(result.report)));
}

std::string eval_simulated(const std::string& pairs, const std::string& judge, double p, std::uint32_t n_trials,
                           const std::string& order_policy, std::uint64_t seed) {
    prefjudge::PairwiseJudge j;
    if (judge == "always-first") {
        j = prefjudge::sim::always_first_judge();
    } else if (judge == "order-invariant") {
        j = prefjudge::sim::order_invariant_judge(p, seed);
    } else {
        throw prefjudge::InvalidInput("unknown simulated judge '" + judge + "'");
    }
    prefjudge::PairwiseOptions opt;
    opt.n_trials = n_trials;
    opt.seed = seed;
    opt.order_policy = prefjudge::order_policy_from_string(order_policy);
    return prefjudge::canonical_dump(
        prefjudge::to_json(prefjudge::eval_pairwise(parse_list<prefjudge::PreferencePair>(pairs), j, opt)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    py::register_exception<prefjudge::InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<prefjudge::DataIntegrityError>(m, "DataIntegrityError", PyExc_ValueError);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = prefjudge::cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    });

    m.def("bt_loss", [](double chosen, double rejected) {
        const auto l = prefjudge::bt_loss(chosen, rejected);
        return py::make_tuple(l.loss, l.grad_chosen, l.grad_rejected);
    });
    m.def("grpo_advantages", [](const std::vector<double>& rewards) { return prefjudge::grpo_advantages(rewards); });
    m.def("word_count", [](const std::string& text) { return prefjudge::word_count(text); });
    m.def("length_compatible", &prefjudge::length_compatible);
    m.def("majority_accuracy", &prefjudge::sim::majority_accuracy, py::arg("p"), py::arg("n"),
          py::arg("tie_weight") = 0.0);
    m.def("base_spec_json", [](double duration) { return json(prefjudge::base_spec(duration)).dump(); });
    m.def("synthetic_pairs_json", [](std::size_t n, std::uint64_t seed) {
        return prefjudge::canonical_dump(json(prefjudge::sim::synthetic_pairs(n, seed)));
    });
    m.def("build_pairs_json", &build_pairs_json);
    m.def("eval_simulated_json", &eval_simulated);
    m.def("canonical_dump_json", [](const std::string& text) { return prefjudge::canonical_dump(json::parse(text)); });
}
