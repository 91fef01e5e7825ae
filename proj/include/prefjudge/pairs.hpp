#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefjudge/records.hpp"

namespace prefjudge {

struct FilterConfig {
    double tau = 0.25;
    std::uint64_t min_words = 5;

    void validate() const;
};

// Number of maximal whitespace-separated tokens.
std::uint64_t word_count(std::string_view text);

// |l1 - l2| / min(l1, l2) < tau, strict. Throws InvalidInput on a zero length.
bool length_compatible(std::uint64_t l1, std::uint64_t l2, double tau);

enum class DiscardReason { AllCorrect, AllIncorrect, NoLengthCompatiblePair, Unverified, TooShort };

std::string_view to_string(DiscardReason r);

struct DiscardReport {
    std::size_t samples = 0;
    std::size_t pairs = 0;
    std::map<DiscardReason, std::size_t> discarded;
    // Unverified records excluded from consideration (across all samples).
    std::size_t unverified_records = 0;

    std::size_t total_discarded() const;
};

nlohmann::json to_json(const DiscardReport& report);

struct PairBuildResult {
    std::vector<PreferencePair> pairs;  // ordered by sample_id
    DiscardReport report;
};

// At most one pair per sample. Per sample, in order: no verified records ->
// Unverified; all Correct -> AllCorrect; all Incorrect -> AllIncorrect; no
// Correct or no Incorrect left above min_words -> TooShort; no
// length-compatible (Correct, Incorrect) combination -> NoLengthCompatiblePair.
// Otherwise one compatible combination is chosen uniformly with a generator
// seeded from (seed, sample_id). Rollouts whose sample_id is not in
// `samples` are ignored.
PairBuildResult build_pairs(const std::vector<Sample>& samples, const std::vector<RolloutRecord>& rollouts,
                            const FilterConfig& config, std::uint64_t seed);

// Re-checks the pair invariants; throws DataIntegrityError naming the pair.
void check_pair_invariants(const PreferencePair& pair, double tau);

}  // namespace prefjudge
