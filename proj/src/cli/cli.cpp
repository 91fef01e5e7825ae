#include "prefjudge/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "json_config.hpp"
#include "prefjudge/bon.hpp"
#include "prefjudge/chat.hpp"
#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/eval.hpp"
#include "prefjudge/pairs.hpp"
#include "prefjudge/parallel.hpp"
#include "prefjudge/records.hpp"
#include "prefjudge/review.hpp"
#include "prefjudge/reward.hpp"
#include "prefjudge/rollout.hpp"
#include "prefjudge/simulation.hpp"
#include "prefjudge/verifier.hpp"

namespace prefjudge::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::size_t parallel = default_parallelism();
    std::string manifest;
};

struct GenOverrides {
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> top_k;
    std::optional<int> max_tokens;
};

struct RolloutOpts {
    std::string samples;
    std::string out = "rollouts.jsonl";
    std::uint32_t n_per_model = 4;
    bool perturb = true;
    bool verify = true;
    std::string match_judge;
    std::vector<std::string> endpoints;
    std::optional<std::size_t> max_new_calls;
    GenOverrides gen;
};

struct VerifyOpts {
    std::string samples;
    std::string rollouts;
    std::string out = "rollouts.verified.jsonl";
    std::string match_judge;
};

struct PairOpts {
    std::string samples;
    std::string rollouts;
    std::string out_dir = ".";
    double tau = 0.25;
    std::uint64_t min_words = 5;
};

struct ReviewOpts {
    std::string pairs;
    std::string verdicts = "verdicts.jsonl";
    std::string host = "127.0.0.1";
    int port = 8080;
    int lease_seconds = 600;
    std::string static_dir;
};

struct EvalOpts {
    std::string pairs;
    std::string protocol = "pairwise";
    std::string judge;
    std::string scorer;
    std::uint32_t n_trials = 8;
    std::string order_policy = "random";
    std::string prompt_template;
    std::string out_dir = ".";
};

struct BonOpts {
    std::string candidates;
    std::vector<std::string> strategies{"first", "majority"};
    std::string scorer;
    std::string judge;
    std::string self_judge;
    std::vector<std::size_t> n_values{1, 2, 4, 6, 8};
    std::string mode = "knockout";
    std::string out_dir = ".";
};

struct DrmOpts {
    std::string pairs;
    std::string out = "drm_checkpoint.json";
    std::string loss_trace;
    std::uint32_t epochs = 10;
    double learning_rate = 0.5;
    std::uint32_t batch_size = 32;
    std::uint32_t feature_dim = 4096;
};

struct GrpoOpts {
    std::string pairs;
    bool bandit = false;
    std::uint32_t generations = 500;
    std::uint32_t group_size = 4;
    double clip_epsilon = 0.2;
    double kl_beta = 1e-3;
    double temperature = 1.0;
    double learning_rate = 0.1;
    std::uint32_t steps_per_generation = 4;
    std::uint32_t feature_dim = 4096;
    std::string out = "grpo_policy.json";
    std::string loss_trace;
};

struct SimOpts {
    std::string bias = "first";
    double p = 0.75;
    std::uint32_t n_trials = 8;
    std::size_t pairs = 2000;
    std::string order_policy = "random";
    std::string out = "simulate_judges.json";
};

struct ReportOpts {
    std::vector<std::string> eval;
    std::string bon;
    std::string out_dir = ".";
};

struct Options {
    GlobalOpts global;
    RolloutOpts rollout;
    VerifyOpts verify;
    PairOpts pair;
    ReviewOpts review;
    EvalOpts eval;
    BonOpts bon;
    DrmOpts drm;
    GrpoOpts grpo;
    SimOpts sim;
    ReportOpts report;
};

void add_generation_flags(CLI::App* sub, GenOverrides& g) {
    sub->add_option("--temperature", g.temperature, "Sampling temperature (overrides config generation.temperature)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--top-p", g.top_p, "Nucleus sampling mass in (0, 1]")->check(CLI::Range(1e-9, 1.0));
    sub->add_option("--top-k", g.top_k, "Top-k cutoff")->check(CLI::PositiveNumber);
    sub->add_option("--max-tokens", g.max_tokens, "Completion token budget")->check(CLI::PositiveNumber);
}

std::unique_ptr<CLI::App> build_app(Options& o) {
    auto app = std::make_unique<CLI::App>("Preference-data pipeline and reward-model evaluation harness", "prefjudge");
    app->option_defaults()->always_capture_default();
    app->require_subcommand(1, 1);
    app->fallthrough();
    app->config_formatter(std::make_shared<JsonConfig>());
    app->allow_config_extras(CLI::config_extras_mode::ignore);
    app->set_config("--config", "", "JSON run config; command-line flags override its values");
    app->add_option("--seed", o.global.seed, "Global seed for every random choice");
    app->add_option("--parallel", o.global.parallel, "Worker threads (default: logical cores)")
        ->check(CLI::PositiveNumber);
    app->add_option("--manifest", o.global.manifest, "Manifest path (default: manifest.json next to the outputs)");

    auto* ro = app->add_subcommand("rollout", "Generate chain-of-thought rollouts from model endpoints");
    ro->add_option("--samples", o.rollout.samples, "Input samples JSONL")->required()->check(CLI::ExistingFile);
    ro->add_option("--out", o.rollout.out, "Output rollouts JSONL (appended; resumable)");
    ro->add_option("--n-per-model", o.rollout.n_per_model, "Rollouts per sample and endpoint")
        ->check(CLI::PositiveNumber);
    ro->add_flag("--perturb,!--no-perturb", o.rollout.perturb, "Apply random visual perturbations");
    ro->add_flag("--verify,!--no-verify", o.rollout.verify, "Verify answers as rollouts complete");
    ro->add_option("--match-judge", o.rollout.match_judge, "Endpoint for undecidable answer matches");
    ro->add_option("--endpoint", o.rollout.endpoints, "Endpoint names to use (default: all configured)");
    ro->add_option("--max-new-calls", o.rollout.max_new_calls, "Stop after this many new endpoint calls");
    add_generation_flags(ro, o.rollout.gen);

    auto* ve = app->add_subcommand("verify", "Re-verify unverified rollouts");
    ve->add_option("--samples", o.verify.samples, "Input samples JSONL")->required()->check(CLI::ExistingFile);
    ve->add_option("--rollouts", o.verify.rollouts, "Input rollouts JSONL")->required()->check(CLI::ExistingFile);
    ve->add_option("--out", o.verify.out, "Output rollouts JSONL");
    ve->add_option("--match-judge", o.verify.match_judge, "Endpoint for undecidable answer matches");

    auto* pa = app->add_subcommand("pair", "Build length-filtered preference pairs");
    pa->add_option("--samples", o.pair.samples, "Input samples JSONL")->required()->check(CLI::ExistingFile);
    pa->add_option("--rollouts", o.pair.rollouts, "Input rollouts JSONL")->required()->check(CLI::ExistingFile);
    pa->add_option("--out-dir", o.pair.out_dir, "Directory for pairs.jsonl and discard_report.json");
    pa->add_option("--tau", o.pair.tau, "Length-ratio threshold (strict)")->check(CLI::Range(1e-9, 1e9));
    pa->add_option("--min-words", o.pair.min_words, "Minimum response length in words");

    auto* rv = app->add_subcommand("review-serve", "Serve the pair review API");
    rv->add_option("--pairs", o.review.pairs, "Input pairs JSONL")->required()->check(CLI::ExistingFile);
    rv->add_option("--verdicts", o.review.verdicts, "Verdict log JSONL (appended)");
    rv->add_option("--host", o.review.host, "Bind address");
    rv->add_option("--port", o.review.port, "Bind port (0 picks a free port)")->check(CLI::Range(0, 65535));
    rv->add_option("--lease-seconds", o.review.lease_seconds, "Lease idle window")->check(CLI::PositiveNumber);
    rv->add_option("--static-dir", o.review.static_dir, "Directory of UI assets to serve")
        ->check(CLI::ExistingDirectory);

    auto* ev = app->add_subcommand("eval", "Evaluate a reward model on preference pairs");
    ev->add_option("--pairs", o.eval.pairs, "Input pairs JSONL")->required()->check(CLI::ExistingFile);
    ev->add_option("--protocol", o.eval.protocol, "pairwise or pointwise")
        ->check(CLI::IsMember({"pairwise", "pointwise"}));
    ev->add_option("--judge", o.eval.judge, "Endpoint name, or sim:first | sim:invalid | sim:perfect | sim:p=<x>");
    ev->add_option("--scorer", o.eval.scorer, "Pointwise scorer: oracle | drm:<checkpoint>");
    ev->add_option("--n-trials", o.eval.n_trials, "Judgments per pair (even)")->check(CLI::PositiveNumber);
    ev->add_option("--order-policy", o.eval.order_policy, "random or balanced")
        ->check(CLI::IsMember({"random", "balanced"}));
    ev->add_option("--prompt-template", o.eval.prompt_template, "Custom judge prompt template")
        ->check(CLI::ExistingFile);
    ev->add_option("--out-dir", o.eval.out_dir, "Directory for eval_result.json and trials.jsonl");

    auto* bo = app->add_subcommand("bon", "Best-of-N selection sweep");
    bo->add_option("--candidates", o.bon.candidates, "Input candidate sets JSONL")->required()->check(CLI::ExistingFile);
    bo->add_option("--strategies", o.bon.strategies, "first, majority, pointwise, pairwise, self-judge")
        ->delimiter(',')
        ->check(CLI::IsMember({"first", "majority", "pointwise", "pairwise", "self-judge"}));
    bo->add_option("--scorer", o.bon.scorer, "Scorer for the pointwise strategy: oracle | drm:<checkpoint>");
    bo->add_option("--judge", o.bon.judge, "Judge for the pairwise strategy (endpoint or sim:...)");
    bo->add_option("--self-judge", o.bon.self_judge, "Generator endpoint used as its own judge");
    bo->add_option("--n-values", o.bon.n_values, "Candidate counts to sweep")->delimiter(',')->check(CLI::PositiveNumber);
    bo->add_option("--mode", o.bon.mode, "knockout or round-robin")->check(CLI::IsMember({"knockout", "round-robin"}));
    bo->add_option("--out-dir", o.bon.out_dir, "Directory for bon_result.json and bon_curve.csv");

    auto* dr = app->add_subcommand("train-drm", "Train the linear discriminative reward model");
    dr->add_option("--pairs", o.drm.pairs, "Input pairs JSONL")->required()->check(CLI::ExistingFile);
    dr->add_option("--out", o.drm.out, "Checkpoint JSON");
    dr->add_option("--loss-trace", o.drm.loss_trace, "CSV of mean loss per epoch");
    dr->add_option("--epochs", o.drm.epochs, "Training epochs")->check(CLI::PositiveNumber);
    dr->add_option("--learning-rate", o.drm.learning_rate, "SGD step size")->check(CLI::PositiveNumber);
    dr->add_option("--batch-size", o.drm.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    dr->add_option("--feature-dim", o.drm.feature_dim, "Hashed feature dimension")->check(CLI::PositiveNumber);

    auto* gr = app->add_subcommand("train-grpo", "Train the two-choice judge policy with group-relative updates");
    auto* gp = gr->add_option("--pairs", o.grpo.pairs, "Input pairs JSONL")->check(CLI::ExistingFile);
    auto* gb = gr->add_flag("--bandit", o.grpo.bandit, "Use the built-in two-context bandit");
    gp->excludes(gb);
    gr->add_option("--generations", o.grpo.generations, "Sampling generations")->check(CLI::PositiveNumber);
    gr->add_option("--group-size", o.grpo.group_size, "Rollouts per group")->check(CLI::PositiveNumber);
    gr->add_option("--clip-epsilon", o.grpo.clip_epsilon, "Ratio clip width")->check(CLI::Range(1e-9, 1.0));
    gr->add_option("--kl-beta", o.grpo.kl_beta, "KL penalty weight")->check(CLI::NonNegativeNumber);
    gr->add_option("--temperature", o.grpo.temperature, "Policy temperature")->check(CLI::Range(1e-9, 1e9));
    gr->add_option("--learning-rate", o.grpo.learning_rate, "Gradient-ascent step size")->check(CLI::PositiveNumber);
    gr->add_option("--steps-per-generation", o.grpo.steps_per_generation, "Updates per sampled generation")
        ->check(CLI::PositiveNumber);
    gr->add_option("--feature-dim", o.grpo.feature_dim, "Hashed feature dimension for --pairs")
        ->check(CLI::PositiveNumber);
    gr->add_option("--out", o.grpo.out, "Policy JSON");
    gr->add_option("--loss-trace", o.grpo.loss_trace, "CSV of per-generation statistics");

    auto* si = app->add_subcommand("simulate-judges", "Run the majority-vote protocol against a simulated judge");
    si->add_option("--bias", o.sim.bias, "first (always picks response 1) or none (order-invariant)")
        ->check(CLI::IsMember({"first", "none"}));
    si->add_option("--p", o.sim.p, "Per-trial accuracy of the order-invariant judge")->check(CLI::Range(0.0, 1.0));
    si->add_option("--n-trials", o.sim.n_trials, "Judgments per pair (even)")->check(CLI::PositiveNumber);
    si->add_option("--pairs", o.sim.pairs, "Synthetic pairs")->check(CLI::PositiveNumber);
    si->add_option("--order-policy", o.sim.order_policy, "random or balanced")
        ->check(CLI::IsMember({"random", "balanced"}));
    si->add_option("--out", o.sim.out, "Result JSON");

    auto* rp = app->add_subcommand("report", "Render metric tables and sweep CSVs");
    rp->add_option("--eval", o.report.eval, "eval_result.json files")->check(CLI::ExistingFile);
    rp->add_option("--bon", o.report.bon, "bon_result.json")->check(CLI::ExistingFile);
    rp->add_option("--out-dir", o.report.out_dir, "Directory for report.md, n_sweep.csv and bon_curve.csv");

    return app;
}

// ---------------------------------------------------------------------------

struct Env {
    const CLI::App& app;
    const Options& opts;
    nlohmann::json config = nlohmann::json::object();
    std::vector<ModelEndpoint> endpoints;
    GenerationParams generation;
    RetryPolicy retry;
    std::ostream& out;
    std::ostream& err;
    std::map<std::string, std::shared_ptr<ChatClient>> clients{};

    std::shared_ptr<ChatClient> client(const std::string& name) {
        if (auto it = clients.find(name); it != clients.end()) return it->second;
        for (const auto& e : endpoints) {
            if (e.name == name) {
                auto c = std::make_shared<ChatClient>(e, std::make_shared<HttpChatBackend>(), retry);
                clients.emplace(name, c);
                return c;
            }
        }
        throw ConfigError("unknown endpoint '" + name + "' (not in config endpoints)");
    }

    nlohmann::json digest_input() const {
        auto j = effective_options(app);
        j.erase("parallel");
        j.erase("manifest");
        for (const auto& s : kStructuredSections) {
            if (config.contains(s)) j[s] = config[s];
        }
        return j;
    }

    void manifest(Stage stage, const fs::path& default_dir, std::vector<std::string> inputs,
                  std::vector<std::string> outputs) const {
        const fs::path path = opts.global.manifest.empty() ? default_dir / "manifest.json" : fs::path(opts.global.manifest);
        record_manifest(path, make_manifest(stage, opts.global.seed, digest_input(), std::move(inputs), std::move(outputs)));
    }
};

template <class T>
std::vector<T> load_records(const fs::path& path, bool require_schema_version) {
    std::vector<T> out;
    std::size_t n = 0;
    for_each_jsonl(
        path,
        [&](const nlohmann::json& j) {
            ++n;
            try {
                out.push_back(j.get<T>());
            } catch (const nlohmann::json::exception& e) {
                throw DataIntegrityError(path.string() + ": record " + std::to_string(n) + ": " + e.what());
            } catch (const InvalidInput& e) {
                throw DataIntegrityError(path.string() + ": record " + std::to_string(n) + ": " + e.what());
            }
        },
        require_schema_version);
    return out;
}

// Samples are external input, so schema_version is checked only when present.
std::vector<Sample> load_samples(const fs::path& path) {
    std::vector<Sample> out;
    std::size_t n = 0;
    for_each_jsonl(
        path,
        [&](const nlohmann::json& j) {
            ++n;
            if (j.is_object() && j.contains("schema_version")) check_schema_version(j, path.string());
            try {
                out.push_back(j.get<Sample>());
            } catch (const std::exception& e) {
                throw DataIntegrityError(path.string() + ": record " + std::to_string(n) + ": " + e.what());
            }
        },
        false);
    return out;
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataIntegrityError("cannot write " + tmp.string());
        f << text;
        if (!f) throw DataIntegrityError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

template <class Range>
void write_jsonl_atomic(const fs::path& path, const Range& records) {
    std::string text;
    for (const auto& r : records) {
        text += canonical_dump(nlohmann::json(r));
        text += '\n';
    }
    write_text_atomic(path, text);
}

fs::path parent_or_cwd(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

GenerationParams resolve_generation(GenerationParams g, const GenOverrides& o) {
    if (o.temperature) g.temperature = *o.temperature;
    if (o.top_p) g.top_p = *o.top_p;
    if (o.top_k) g.top_k = *o.top_k;
    if (o.max_tokens) g.max_tokens = *o.max_tokens;
    try {
        validate(g);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    return g;
}

std::optional<TextCompleter> match_judge_for(Env& env, const std::string& name) {
    if (name.empty()) return std::nullopt;
    GenerationParams deterministic = env.generation;
    deterministic.temperature = 0.0;
    return as_completer(env.client(name), deterministic);
}

// Simulated judges are addressed as sim:<kind>; anything else names an endpoint.
PairwiseJudge make_judge(Env& env, const std::string& spec, std::function<bool(std::string_view)> preferred,
                         const std::string& prompt_template) {
    if (spec.empty()) throw ConfigError("a judge is required (--judge)");
    if (spec.rfind("sim:", 0) == 0) {
        const auto kind = spec.substr(4);
        if (kind == "first") return sim::always_first_judge();
        if (kind == "invalid") return sim::invalid_judge();
        if (kind == "perfect") return sim::order_invariant_judge(1.0, env.opts.global.seed, std::move(preferred));
        if (kind.rfind("p=", 0) == 0) {
            double p = 0.0;
            try {
                p = std::stod(kind.substr(2));
            } catch (const std::exception&) {
                throw ConfigError("bad simulated judge accuracy in '" + spec + "'");
            }
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("simulated judge accuracy must lie in [0, 1]");
            return sim::order_invariant_judge(p, env.opts.global.seed, std::move(preferred));
        }
        throw ConfigError("unknown simulated judge '" + spec + "'");
    }
    return make_endpoint_judge(env.client(spec), prompt_template, env.generation);
}

PointwiseScorer make_scorer(const std::string& spec) {
    if (spec.empty()) throw ConfigError("a scorer is required (--scorer)");
    if (spec == "oracle") return sim::oracle_scorer();
    if (spec.rfind("drm:", 0) == 0) {
        const fs::path path = spec.substr(4);
        if (!fs::exists(path)) throw ConfigError("scorer checkpoint not found: " + path.string());
        auto params = std::make_shared<RewardParams>(params_from_checkpoint(read_json_file(path)));
        auto featurize = std::make_shared<HashedFeaturizer>(static_cast<std::uint32_t>(params->feature_dim()));
        return [params, featurize](std::string_view, const RolloutRecord& r) {
            return score(*params, (*featurize)(r.raw_text));
        };
    }
    throw ConfigError("unknown scorer '" + spec + "'");
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// ---------------------------------------------------------------------------

int cmd_rollout(Env& env) {
    const auto& o = env.opts.rollout;
    auto samples = load_samples(o.samples);
    auto gen = resolve_generation(env.generation, o.gen);

    std::vector<std::string> names = o.endpoints;
    if (names.empty()) {
        for (const auto& e : env.endpoints) names.push_back(e.name);
    }
    if (names.empty()) throw ConfigError("no endpoints configured");
    std::vector<std::shared_ptr<ChatClient>> clients;
    for (const auto& n : names) clients.push_back(env.client(n));

    RolloutOptions ro;
    ro.n_per_model = o.n_per_model;
    ro.perturb = o.perturb;
    ro.params = gen;
    ro.seed = env.opts.global.seed;
    ro.workers = env.opts.global.parallel;
    ro.verify = o.verify;
    ro.match_judge = match_judge_for(env, o.match_judge);
    ro.max_new_calls = o.max_new_calls;

    ensure_parent(o.out);
    const auto stats = run_rollouts(samples, clients, ro, o.out);
    env.manifest(Stage::Rollout, parent_or_cwd(o.out), {o.samples}, {o.out});
    env.out << "rollout: planned " << stats.planned << ", already done " << stats.skipped_existing << ", attempted "
            << stats.attempted << ", transport failures " << stats.transport_failures << '\n';
    if (stats.transport_failures > 0) {
        env.err << "error: transport: " << stats.transport_failures
                << " calls failed after retries; rerun to resume the missing rollouts\n";
        return exit_code::transport;
    }
    return exit_code::ok;
}

int cmd_verify(Env& env) {
    const auto& o = env.opts.verify;
    std::map<std::string, Sample> by_id;
    for (auto& s : load_samples(o.samples)) by_id.emplace(s.sample_id, std::move(s));
    auto records = load_records<RolloutRecord>(o.rollouts, true);
    for (const auto& r : records) {
        if (!by_id.contains(r.sample_id))
            throw DataIntegrityError("rollout references unknown sample '" + r.sample_id + "'");
    }
    const auto judge = match_judge_for(env, o.match_judge);
    const TextCompleter* judge_ptr = judge ? &*judge : nullptr;

    std::atomic<std::size_t> decided{0};
    parallel_for(records.size(), env.opts.global.parallel, [&](std::size_t i) {
        auto& r = records[i];
        if (r.verdict != Verdict::Unverified || r.raw_text.empty()) return;
        verify_rollout(r, by_id.at(r.sample_id).ground_truth, judge_ptr);
        if (r.verdict != Verdict::Unverified) ++decided;
    });
    const auto still = std::count_if(records.begin(), records.end(),
                                     [](const RolloutRecord& r) { return r.verdict == Verdict::Unverified; });
    write_jsonl_atomic(o.out, records);
    env.manifest(Stage::Verify, parent_or_cwd(o.out), {o.samples, o.rollouts}, {o.out});
    env.out << "verify: " << records.size() << " records, newly decided " << decided.load() << ", unverified " << still
            << '\n';
    return exit_code::ok;
}

int cmd_pair(Env& env) {
    const auto& o = env.opts.pair;
    FilterConfig cfg{o.tau, o.min_words};
    try {
        cfg.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const auto samples = load_samples(o.samples);
    const auto rollouts = load_records<RolloutRecord>(o.rollouts, true);
    const auto result = build_pairs(samples, rollouts, cfg, env.opts.global.seed);

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    write_jsonl_atomic(dir / "pairs.jsonl", result.pairs);
    write_json_file(dir / "discard_report.json", to_json(result.report), true);
    env.manifest(Stage::Pair, dir, {o.samples, o.rollouts},
                 {(dir / "pairs.jsonl").string(), (dir / "discard_report.json").string()});
    env.out << "pair: " << result.report.samples << " samples, " << result.pairs.size() << " pairs, "
            << result.report.total_discarded() << " discarded\n";
    return exit_code::ok;
}

int cmd_review(Env& env) {
    const auto& o = env.opts.review;
    auto pairs = load_records<PreferencePair>(o.pairs, true);
    ensure_parent(o.verdicts);
    auto store = std::make_shared<ReviewStore>(std::move(pairs), o.verdicts, std::chrono::seconds(o.lease_seconds));
    std::optional<fs::path> static_dir;
    if (!o.static_dir.empty()) static_dir = o.static_dir;
    ReviewServer server(store, static_dir);
    const int port = server.bind(o.host, o.port);
    env.manifest(Stage::Review, parent_or_cwd(o.verdicts), {o.pairs}, {o.verdicts});
    env.out << "review-serve: listening on http://" << o.host << ':' << port << std::endl;

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &set, &previous);
    std::thread listener([&] { server.listen(); });
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    listener.join();
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    const auto p = store->progress();
    env.out << "review-serve: stopped, " << p.decided << '/' << p.total << " decided\n";
    return exit_code::ok;
}

int cmd_eval(Env& env) {
    const auto& o = env.opts.eval;
    std::string tmpl;
    if (!o.prompt_template.empty()) {
        try {
            tmpl = load_prompt_template(o.prompt_template);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    }
    const auto pairs = load_records<PreferencePair>(o.pairs, true);
    const fs::path dir = o.out_dir;
    std::vector<std::string> outputs{(dir / "eval_result.json").string()};

    EvalResult result;
    if (o.protocol == "pairwise") {
        if (o.n_trials < 2 || o.n_trials % 2 != 0) throw ConfigError("--n-trials must be even and at least 2");
        auto chosen = std::make_shared<std::unordered_set<std::string>>();
        for (const auto& p : pairs) chosen->insert(p.chosen.raw_text);
        auto preferred = [chosen](std::string_view text) { return chosen->contains(std::string(text)); };
        const auto judge = make_judge(env, o.judge, preferred, tmpl);
        PairwiseOptions po;
        po.n_trials = o.n_trials;
        po.seed = env.opts.global.seed;
        po.order_policy = order_policy_from_string(o.order_policy);
        po.workers = env.opts.global.parallel;
        result = eval_pairwise(pairs, judge, po);
        fs::create_directories(dir);
        std::vector<nlohmann::json> trials;
        trials.reserve(result.trials.size());
        for (const auto& t : result.trials) trials.push_back(to_json(t));
        write_jsonl_atomic(dir / "trials.jsonl", trials);
        outputs.push_back((dir / "trials.jsonl").string());
    } else {
        const auto scorer = make_scorer(o.scorer);
        result = eval_pointwise(pairs, scorer, env.opts.global.parallel);
        fs::create_directories(dir);
    }
    write_json_file(dir / "eval_result.json", to_json(result), true);
    env.manifest(Stage::Eval, dir, {o.pairs}, outputs);
    const auto flagged = std::count_if(result.per_pair.begin(), result.per_pair.end(),
                                       [](const PairOutcome& p) { return p.flagged; });
    env.out << "eval: " << result.protocol << ", " << pairs.size() << " pairs, overall " << fixed(result.metrics.overall)
            << ", macro " << fixed(result.metrics.macro) << ", flagged " << flagged << '\n';
    return exit_code::ok;
}

int cmd_bon(Env& env) {
    const auto& o = env.opts.bon;
    const std::set<std::string> wanted(o.strategies.begin(), o.strategies.end());
    if (wanted.empty()) throw ConfigError("--strategies is empty");
    const auto sets = load_records<CandidateSet>(o.candidates, true);

    PairwiseBonOptions po;
    po.mode = o.mode == "round-robin" ? PairwiseMode::RoundRobin : PairwiseMode::Knockout;
    po.seed = env.opts.global.seed;

    // A simulated pairwise judge prefers candidates verified Correct.
    auto correct_texts = std::make_shared<std::unordered_set<std::string>>();
    for (const auto& s : sets) {
        for (const auto& c : s.candidates) {
            if (c.verdict == Verdict::Correct) correct_texts->insert(c.raw_text);
        }
    }
    auto preferred = [correct_texts](std::string_view t) { return correct_texts->contains(std::string(t)); };

    std::map<std::string, Selector> strategies;
    for (const auto& name : wanted) {
        if (name == "first") {
            strategies[name] = [](const CandidateSet&) { return Selection{}; };
        } else if (name == "majority") {
            strategies[name] = majority_of_n;
        } else if (name == "pointwise") {
            strategies[name] = [scorer = make_scorer(o.scorer)](const CandidateSet& s) { return bon_pointwise(s, scorer); };
        } else if (name == "pairwise") {
            strategies[name] = [judge = make_judge(env, o.judge, preferred, {}), po](const CandidateSet& s) {
                return bon_pairwise(s, judge, po);
            };
        } else if (name == "self-judge") {
            if (o.self_judge.empty()) throw ConfigError("the self-judge strategy needs --self-judge");
            strategies[name] = [judge = make_judge(env, o.self_judge, preferred, {}), po](const CandidateSet& s) {
                return self_judge(s, judge, po);
            };
        }
    }
    const auto curve = bon_sweep(sets, strategies, o.n_values);

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    write_json_file(dir / "bon_result.json", to_json(curve), true);
    write_text_atomic(dir / "bon_curve.csv", to_csv(curve));
    env.manifest(Stage::Bon, dir, {o.candidates},
                 {(dir / "bon_result.json").string(), (dir / "bon_curve.csv").string()});
    for (const auto& [name, by_n] : curve.accuracy) {
        env.out << "bon: " << name;
        for (const auto& [n, acc] : by_n) env.out << "  N=" << n << ' ' << fixed(acc);
        env.out << '\n';
    }
    return exit_code::ok;
}

int cmd_train_drm(Env& env) {
    const auto& o = env.opts.drm;
    const auto pairs = load_records<PreferencePair>(o.pairs, true);
    if (pairs.empty()) throw DataIntegrityError(o.pairs + " holds no pairs");
    const HashedFeaturizer featurize(o.feature_dim);
    std::vector<FeaturePair> data;
    data.reserve(pairs.size());
    for (const auto& p : pairs) data.push_back({featurize(p.chosen.raw_text), featurize(p.rejected.raw_text)});

    DrmTrainOptions to;
    to.learning_rate = o.learning_rate;
    to.epochs = o.epochs;
    to.batch_size = o.batch_size;
    to.seed = env.opts.global.seed;
    RewardParams init;
    init.weights.assign(o.feature_dim, 0.0);
    const auto result = train_drm(data, init, to);

    std::vector<std::string> outputs{o.out};
    write_json_file(o.out, checkpoint_json(result.params), true);
    if (!o.loss_trace.empty()) {
        std::ostringstream csv;
        csv << "epoch,loss\n" << std::setprecision(17);
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i) csv << i << ',' << result.loss_trace[i] << '\n';
        write_text_atomic(o.loss_trace, csv.str());
        outputs.push_back(o.loss_trace);
    }
    env.manifest(Stage::Train, parent_or_cwd(o.out), {o.pairs}, outputs);
    env.out << "train-drm: " << data.size() << " pairs, loss " << fixed(result.loss_trace.front()) << " -> "
            << fixed(result.loss_trace.back()) << ", train accuracy " << fixed(pairwise_accuracy(result.params, data))
            << '\n';
    return exit_code::ok;
}

std::vector<double> densify(const SparseFeatures& f) {
    std::vector<double> d(f.dim, 0.0);
    for (std::size_t i = 0; i < f.index.size(); ++i) d[f.index[i]] = f.value[i];
    return d;
}

int cmd_train_grpo(Env& env) {
    const auto& o = env.opts.grpo;
    if (o.pairs.empty() == !o.bandit) throw ConfigError("train-grpo needs exactly one of --pairs or --bandit");
    GrpoConfig cfg;
    cfg.group_size = o.group_size;
    cfg.clip_epsilon = o.clip_epsilon;
    cfg.kl_beta = o.kl_beta;
    cfg.temperature = o.temperature;
    cfg.learning_rate = o.learning_rate;
    cfg.steps_per_generation = o.steps_per_generation;
    try {
        cfg.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }

    std::vector<PickContext> contexts;
    std::vector<std::string> inputs;
    if (o.bandit) {
        contexts = two_choice_bandit();
    } else {
        inputs.push_back(o.pairs);
        const HashedFeaturizer featurize(o.feature_dim);
        for (const auto& p : load_records<PreferencePair>(o.pairs, true)) {
            const auto c = densify(featurize(p.chosen.raw_text));
            const auto r = densify(featurize(p.rejected.raw_text));
            std::vector<double> diff(c.size());
            for (std::size_t i = 0; i < c.size(); ++i) diff[i] = c[i] - r[i];
            // Both presentation orders, so position alone carries no reward.
            contexts.push_back({diff, Choice::First});
            for (auto& v : diff) v = -v;
            contexts.push_back({std::move(diff), Choice::Second});
        }
        if (contexts.empty()) throw DataIntegrityError(o.pairs + " holds no pairs");
    }
    PolicyParams init{std::vector<double>(contexts.front().features.size(), 0.0)};
    const auto result = train_grpo(contexts, init, cfg, o.generations, env.opts.global.seed);

    nlohmann::json policy = with_schema_version({{"theta", result.policy.theta},
                                                 {"group_size", cfg.group_size},
                                                 {"clip_epsilon", cfg.clip_epsilon},
                                                 {"kl_beta", cfg.kl_beta},
                                                 {"temperature", cfg.temperature},
                                                 {"learning_rate", cfg.learning_rate},
                                                 {"steps_per_generation", cfg.steps_per_generation},
                                                 {"generations", o.generations},
                                                 {"mean_correct_prob", result.mean_correct_prob.back()}});
    std::vector<std::string> outputs{o.out};
    write_json_file(o.out, policy, true);
    if (!o.loss_trace.empty()) {
        std::ostringstream csv;
        csv << "generation,surrogate,mean_reward,mean_correct_prob\n" << std::setprecision(17);
        for (std::size_t g = 0; g < result.mean_correct_prob.size(); ++g)
            csv << g << ',' << result.surrogate[g] << ',' << result.mean_reward[g] << ',' << result.mean_correct_prob[g]
                << '\n';
        write_text_atomic(o.loss_trace, csv.str());
        outputs.push_back(o.loss_trace);
    }
    env.manifest(Stage::Train, parent_or_cwd(o.out), inputs, outputs);
    env.out << "train-grpo: " << contexts.size() << " contexts, " << o.generations
            << " generations, mean pi(correct) " << fixed(result.mean_correct_prob.back()) << '\n';
    return exit_code::ok;
}

int cmd_simulate(Env& env) {
    const auto& o = env.opts.sim;
    if (o.n_trials < 2 || o.n_trials % 2 != 0) throw ConfigError("--n-trials must be even and at least 2");
    const auto seed = env.opts.global.seed;
    const auto pairs = sim::synthetic_pairs(o.pairs, seed);
    const auto policy = order_policy_from_string(o.order_policy);
    const bool first = o.bias == "first";
    const auto judge = first ? sim::always_first_judge() : sim::order_invariant_judge(o.p, seed);

    PairwiseOptions po;
    po.n_trials = o.n_trials;
    po.seed = seed;
    po.order_policy = policy;
    po.workers = env.opts.global.parallel;
    const auto result = eval_pairwise(pairs, judge, po);

    // A first-biased judge votes for the chosen response exactly when it is shown first.
    double expected = 0.0;
    if (!first)
        expected = sim::majority_accuracy(o.p, o.n_trials);
    else if (policy == OrderPolicy::RandomSwap)
        expected = sim::majority_accuracy(0.5, o.n_trials);

    nlohmann::json j = with_schema_version({{"bias", o.bias},
                                            {"n_trials", o.n_trials},
                                            {"pairs", o.pairs},
                                            {"order_policy", to_string(policy)},
                                            {"seed", seed},
                                            {"accuracy", result.metrics.overall},
                                            {"macro_accuracy", result.metrics.macro},
                                            {"analytic_accuracy", expected}});
    if (!first) j["p"] = o.p;
    write_json_file(o.out, j, true);
    env.manifest(Stage::Eval, parent_or_cwd(o.out), {}, {o.out});
    env.out << "simulate-judges: accuracy " << fixed(result.metrics.overall) << " (analytic " << fixed(expected)
            << ") over " << o.pairs << " pairs\n";
    return exit_code::ok;
}

int cmd_report(Env& env) {
    const auto& o = env.opts.report;
    if (o.eval.empty() && o.bon.empty()) throw ConfigError("report needs --eval and/or --bon inputs");
    const fs::path dir = o.out_dir;

    struct Row {
        std::string source, protocol, order_policy;
        std::uint32_t n_trials = 0;
        std::size_t pairs = 0;
        double overall = 0.0, macro = 0.0;
        std::map<std::string, double> per_dim;
    };
    std::vector<Row> rows;
    std::set<std::string> dims;
    for (const auto& path : o.eval) {
        const auto j = read_json_file(path);
        check_schema_version(j, path);
        try {
            Row r;
            r.source = path;
            r.protocol = j.at("protocol").get<std::string>();
            r.n_trials = j.value("n_trials", 0u);
            r.order_policy = j.value("order_policy", std::string());
            r.pairs = j.at("pairs").get<std::size_t>();
            r.overall = j.at("overall_accuracy").get<double>();
            r.macro = j.at("macro_accuracy").get<double>();
            r.per_dim = j.at("per_dimension_accuracy").get<std::map<std::string, double>>();
            for (const auto& [d, _] : r.per_dim) dims.insert(d);
            rows.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw DataIntegrityError(path + ": " + e.what());
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.protocol, a.n_trials) < std::tie(b.protocol, b.n_trials);
    });

    std::ostringstream md;
    std::vector<std::string> outputs;
    if (!rows.empty()) {
        md << "## Reward-model accuracy\n\n| source | protocol | N | order | pairs | overall | macro |";
        for (const auto& d : dims) md << ' ' << d << " |";
        md << "\n|---|---|---|---|---|---|---|";
        for (std::size_t i = 0; i < dims.size(); ++i) md << "---|";
        md << '\n';
        std::ostringstream csv;
        csv << "source,protocol,n_trials,order_policy,pairs,overall_accuracy,macro_accuracy\n";
        for (const auto& r : rows) {
            const auto n = r.protocol == "pairwise" ? std::to_string(r.n_trials) : std::string("-");
            md << "| " << r.source << " | " << r.protocol << " | " << n << " | "
               << (r.order_policy.empty() ? "-" : r.order_policy) << " | " << r.pairs << " | " << fixed(r.overall)
               << " | " << fixed(r.macro) << " |";
            for (const auto& d : dims) {
                auto it = r.per_dim.find(d);
                md << ' ' << (it == r.per_dim.end() ? std::string("-") : fixed(it->second)) << " |";
            }
            md << '\n';
            csv << r.source << ',' << r.protocol << ',' << r.n_trials << ',' << r.order_policy << ',' << r.pairs << ','
                << fixed(r.overall, 6) << ',' << fixed(r.macro, 6) << '\n';
        }
        md << '\n';
        write_text_atomic(dir / "n_sweep.csv", csv.str());
        outputs.push_back((dir / "n_sweep.csv").string());
    }
    if (!o.bon.empty()) {
        const auto j = read_json_file(o.bon);
        check_schema_version(j, o.bon);
        std::ostringstream csv;
        csv << "strategy,n,accuracy,sets\n";
        md << "## Best-of-N accuracy\n\n| strategy |";
        try {
            const auto n_values = j.at("n_values").get<std::vector<std::size_t>>();
            const auto& sets = j.at("sets_evaluated");
            for (auto n : n_values) md << " N=" << n << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < n_values.size(); ++i) md << "---|";
            md << '\n';
            for (const auto& [name, by_n] : j.at("accuracy").items()) {
                md << "| " << name << " |";
                for (auto n : n_values) {
                    const auto key = std::to_string(n);
                    if (!by_n.contains(key)) {
                        md << " - |";
                        continue;
                    }
                    const double acc = by_n[key].get<double>();
                    md << ' ' << fixed(acc) << " |";
                    csv << name << ',' << n << ',' << fixed(acc, 6) << ',' << sets.at(key).get<std::size_t>() << '\n';
                }
                md << '\n';
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataIntegrityError(o.bon + ": " + e.what());
        }
        md << '\n';
        write_text_atomic(dir / "bon_curve.csv", csv.str());
        outputs.push_back((dir / "bon_curve.csv").string());
    }
    write_text_atomic(dir / "report.md", md.str());
    outputs.push_back((dir / "report.md").string());
    std::vector<std::string> inputs = o.eval;
    if (!o.bon.empty()) inputs.push_back(o.bon);
    env.manifest(Stage::Eval, dir, inputs, outputs);
    env.out << md.str();
    return exit_code::ok;
}

// Loads endpoints, generation defaults and retry policy from the structured
// config sections.
void load_structured(Env& env) {
    const auto& c = env.config;
    try {
        if (c.contains("endpoints")) env.endpoints = c["endpoints"].get<std::vector<ModelEndpoint>>();
        for (const auto& e : env.endpoints) validate(e);
        if (c.contains("generation")) {
            nlohmann::json g = nlohmann::json(GenerationParams{});
            for (const auto& [k, v] : c["generation"].items()) g[k] = v;
            env.generation = g.get<GenerationParams>();
            validate(env.generation);
        }
        if (c.contains("retry")) {
            const auto& r = c["retry"];
            env.retry.max_retries = r.value("max_retries", env.retry.max_retries);
            env.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", env.retry.base_delay.count()));
            env.retry.multiplier = r.value("multiplier", env.retry.multiplier);
            env.retry.jitter = r.value("jitter", env.retry.jitter);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

int dispatch(CLI::App& app, Options& opts, std::ostream& out, std::ostream& err) {
    Env env{app, opts, nlohmann::json::object(), {}, {}, {}, out, err};
    const auto* config_opt = app.get_config_ptr();
    if (config_opt != nullptr && config_opt->count() > 0) {
        const fs::path path = config_opt->as<std::string>();
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config " + path.string());
        try {
            env.config = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        validate_config(env.config, app);
        load_structured(env);
    }

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "rollout") return cmd_rollout(env);
    if (name == "verify") return cmd_verify(env);
    if (name == "pair") return cmd_pair(env);
    if (name == "review-serve") return cmd_review(env);
    if (name == "eval") return cmd_eval(env);
    if (name == "bon") return cmd_bon(env);
    if (name == "train-drm") return cmd_train_drm(env);
    if (name == "train-grpo") return cmd_train_grpo(env);
    if (name == "simulate-judges") return cmd_simulate(env);
    if (name == "report") return cmd_report(env);
    throw ConfigError("unknown subcommand " + name);
}

nlohmann::json flag_names(const CLI::App& app) {
    nlohmann::json names = nlohmann::json::array();
    for (const CLI::Option* opt : app.get_options()) {
        for (const auto& n : opt->get_lnames()) {
            if (n != "help") names.push_back(n);
        }
    }
    return names;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options opts;
    auto app = build_app(opts);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app->parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app->exit(e, out, err);
        return rc == 0 ? exit_code::ok : exit_code::config;
    }

    try {
        return dispatch(*app, opts, out, err);
    } catch (const prefjudge::ConfigError& e) {
        err << "error: config: " << e.what() << '\n';
        return exit_code::config;
    } catch (const TransportError& e) {
        err << "error: transport: " << e.what() << '\n';
        return exit_code::transport;
    } catch (const DataIntegrityError& e) {
        err << "error: data integrity: " << e.what() << '\n';
        return exit_code::data_integrity;
    } catch (const nlohmann::json::exception& e) {
        err << "error: data integrity: " << e.what() << '\n';
        return exit_code::data_integrity;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::failure;
    }
}

nlohmann::json describe_flags() {
    Options opts;
    auto app = build_app(opts);
    nlohmann::json out = nlohmann::json::object();
    out["global"] = flag_names(*app);
    for (const CLI::App* sub : app->get_subcommands([](const CLI::App*) { return true; }))
        out[sub->get_name()] = flag_names(*sub);
    return out;
}

}  // namespace prefjudge::cli
