#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mock_chat_server.hpp"
#include "prefjudge/records.hpp"

namespace prefjudge::testing {

// 20 samples s00..s19. Rollouts from the fixture responder are arranged so
// that, per sample:
//   s00 s01  every rollout correct           -> AllCorrect
//   s02 s03  every rollout incorrect         -> AllIncorrect
//   s04      correct ones far shorter        -> NoLengthCompatiblePair
//   s05      correct ones under 5 words      -> TooShort
//   s06      no <answer> block anywhere      -> Unverified (8 records)
//   s07..s19 mixed, some compatible lengths  -> one pair each (13 pairs)
// Even samples have choice label B, odd ones the open-ended answer
// "red ball"; paraphrased answers need the mock match judge.
inline constexpr std::size_t kPipelineSamples = 20;
inline constexpr std::size_t kPipelinePairs = 13;

std::vector<Sample> pipeline_samples();
void write_pipeline_samples(const std::filesystem::path& path);

// Deterministic in (model, sample_id, rollout_index) for rollouts, in the
// prompt for answer matching, and in (pair_id, trial_index) for pairwise
// judging.
MockReply pipeline_responder(const nlohmann::json& body);

// Run config with endpoints model-a, model-b (max_parallel 2) and judge, all
// on `base_url`, no retries.
nlohmann::json pipeline_config(const std::string& base_url, std::uint64_t seed);

}  // namespace prefjudge::testing
