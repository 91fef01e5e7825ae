#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prefjudge/chat.hpp"
#include "prefjudge/framespec.hpp"
#include "prefjudge/records.hpp"

namespace prefjudge {

// Throws InvalidInput on an empty question.
std::string render_cot_prompt(std::string_view question);

struct RolloutTask {
    std::size_t sample_index = 0;
    std::size_t endpoint_index = 0;
    std::uint32_t rollout_index = 0;
    PerturbationOp perturbation;
    FrameSpec frame_spec;
};

// Full |samples| x |endpoints| x n_per_model plan in canonical order. The
// perturbation of each task depends only on (seed, sample_id, model name,
// rollout index).
std::vector<RolloutTask> plan_rollouts(const std::vector<Sample>& samples, const std::vector<ModelEndpoint>& endpoints,
                                       std::uint32_t n_per_model, bool perturb, std::uint64_t seed);

// Request metadata: ids plus the frame manifest; Dropout tasks are sent as
// text-only requests without a frame manifest.
nlohmann::json rollout_metadata(const Sample& sample, const RolloutTask& task);

struct RolloutOptions {
    std::uint32_t n_per_model = 4;
    bool perturb = true;
    GenerationParams params;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    // Verify answers as records are produced. With no judge, only
    // deterministic matches are decided.
    bool verify = true;
    std::optional<TextCompleter> match_judge;
    // Stop dispatching after this many new endpoint calls (used to simulate
    // interruption).
    std::optional<std::size_t> max_new_calls;
};

struct RolloutStats {
    std::size_t planned = 0;
    std::size_t skipped_existing = 0;
    std::size_t attempted = 0;
    std::size_t transport_failures = 0;
};

// Appends one RolloutRecord per completed call to `output`; already-persisted
// (sample_id, model_name, rollout_index) triples are skipped. Calls that
// exhaust their retries are counted in transport_failures and left unwritten
// so a later run retries them; datastore failures abort the run.
RolloutStats run_rollouts(const std::vector<Sample>& samples, const std::vector<std::shared_ptr<ChatClient>>& clients,
                          const RolloutOptions& options, const std::filesystem::path& output);

}  // namespace prefjudge
