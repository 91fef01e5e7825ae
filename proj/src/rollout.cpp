#include "prefjudge/rollout.hpp"

#include <atomic>
#include <set>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/pairs.hpp"
#include "prefjudge/parallel.hpp"
#include "prefjudge/prompts.hpp"
#include "prefjudge/random.hpp"
#include "prefjudge/verifier.hpp"

namespace prefjudge {

std::string render_cot_prompt(std::string_view question) {
    if (question.empty()) throw InvalidInput("question must be nonempty");
    return prompts::fill(prompts::kCotGeneration, {{"<question>", question}});
}

std::vector<RolloutTask> plan_rollouts(const std::vector<Sample>& samples, const std::vector<ModelEndpoint>& endpoints,
                                       std::uint32_t n_per_model, bool perturb, std::uint64_t seed) {
    std::set<std::string> names;
    for (const auto& e : endpoints) {
        if (!names.insert(e.name).second) throw InvalidInput("duplicate endpoint name: " + e.name);
    }
    std::vector<RolloutTask> plan;
    plan.reserve(samples.size() * endpoints.size() * n_per_model);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const FrameSpec base = base_spec(samples[s].duration_seconds);
        for (std::size_t e = 0; e < endpoints.size(); ++e) {
            for (std::uint32_t k = 0; k < n_per_model; ++k) {
                RolloutTask t{s, e, k, PerturbationOp::normal(), base};
                if (perturb) {
                    const auto idx = std::to_string(k);
                    auto rng = make_rng(seed, {"perturbation", samples[s].sample_id, endpoints[e].name, idx});
                    t.perturbation = sample_perturbation(rng);
                    t.frame_spec = apply_perturbation(base, t.perturbation);
                }
                plan.push_back(t);
            }
        }
    }
    return plan;
}

nlohmann::json rollout_metadata(const Sample& sample, const RolloutTask& task) {
    nlohmann::json meta{{"sample_id", sample.sample_id},
                        {"rollout_index", task.rollout_index},
                        {"perturbation", task.perturbation}};
    if (task.perturbation.kind == PerturbationKind::Dropout) {
        meta["modality"] = "text";
    } else {
        meta["modality"] = "video";
        meta["frame_spec"] = task.frame_spec;
    }
    return meta;
}

RolloutStats run_rollouts(const std::vector<Sample>& samples, const std::vector<std::shared_ptr<ChatClient>>& clients,
                          const RolloutOptions& options, const std::filesystem::path& output) {
    if (clients.empty()) throw InvalidInput("at least one endpoint is required");
    if (options.n_per_model == 0) throw InvalidInput("n_per_model must be positive");
    validate(options.params);

    std::vector<ModelEndpoint> endpoints;
    for (const auto& c : clients) endpoints.push_back(c->endpoint());
    const auto plan = plan_rollouts(samples, endpoints, options.n_per_model, options.perturb, options.seed);

    JsonlWriter writer(output);  // quarantines a torn tail before keys are read
    const auto done = resume_keys(output, {"sample_id", "model_name", "rollout_index"});

    std::vector<const RolloutTask*> pending;
    RolloutStats stats;
    stats.planned = plan.size();
    for (const auto& t : plan) {
        CompositeKey key{samples[t.sample_index].sample_id, endpoints[t.endpoint_index].name,
                         std::to_string(t.rollout_index)};
        if (done.contains(key))
            ++stats.skipped_existing;
        else
            pending.push_back(&t);
    }
    if (options.max_new_calls && pending.size() > *options.max_new_calls) pending.resize(*options.max_new_calls);

    std::atomic<std::size_t> failures{0};
    const TextCompleter* judge = options.match_judge ? &*options.match_judge : nullptr;

    parallel_for(pending.size(), options.workers, [&](std::size_t i) {
        const RolloutTask& task = *pending[i];
        const Sample& sample = samples[task.sample_index];
        auto& client = *clients[task.endpoint_index];

        RolloutRecord rec;
        rec.sample_id = sample.sample_id;
        rec.model_name = client.endpoint().name;
        rec.rollout_index = task.rollout_index;
        rec.perturbation = task.perturbation;
        rec.frame_spec = task.frame_spec;

        ChatRequest request{render_cot_prompt(sample.question), options.params, rollout_metadata(sample, task)};
        try {
            rec.raw_text = client.complete(request);
            rec.token_estimate = word_count(rec.raw_text);
            if (options.verify) {
                verify_rollout(rec, sample.ground_truth, judge);
            } else {
                rec.extracted_answer = extract_answer(rec.raw_text);
            }
        } catch (const TransportError&) {
            // Not persisted, so a resumed run retries the call.
            ++failures;
            return;
        }
        writer.append(nlohmann::json(rec));
    });

    stats.attempted = pending.size();
    stats.transport_failures = failures;
    return stats;
}

}  // namespace prefjudge
