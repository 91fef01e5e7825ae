#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefjudge {

// ---------------------------------------------------------------------------
// Discriminative reward: linear scalar head trained with the pairwise ranking
// loss -log sigma(r_chosen - r_rejected).

struct BtLoss {
    double loss = 0.0;
    double grad_chosen = 0.0;
    double grad_rejected = 0.0;
};

// Stable for |delta| well beyond 1e3. Throws InvalidInput on non-finite input.
BtLoss bt_loss(double r_chosen, double r_rejected);

// Sparse feature vector; indices strictly increasing and < dim.
struct SparseFeatures {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> index;
    std::vector<double> value;
};

struct RewardParams {
    std::vector<double> weights;
    double bias = 0.0;

    std::size_t feature_dim() const noexcept { return weights.size(); }
};

// weights . features + bias; throws InvalidInput on a dimension mismatch.
double score(const RewardParams& params, std::span<const double> features);
double score(const RewardParams& params, const SparseFeatures& features);

// Signed feature hashing of lower-cased alphanumeric tokens, L2-normalized.
class HashedFeaturizer {
public:
    explicit HashedFeaturizer(std::uint32_t dim = 4096);
    SparseFeatures operator()(std::string_view text) const;
    std::uint32_t dim() const noexcept { return dim_; }

private:
    std::uint32_t dim_;
};

struct FeaturePair {
    SparseFeatures chosen;
    SparseFeatures rejected;
};

struct DrmTrainOptions {
    double learning_rate = 0.5;
    std::uint32_t epochs = 10;
    std::uint32_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct DrmTrainResult {
    RewardParams params;
    // Mean loss over the training set before training (index 0) and after each epoch.
    std::vector<double> loss_trace;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double mean_bt_loss(const RewardParams& params, std::span<const FeaturePair> pairs);

// Minibatch SGD on the mean ranking loss with a seeded shuffle per epoch.
// Throws TrainingDiverged when the loss becomes non-finite.
DrmTrainResult train_drm(std::span<const FeaturePair> pairs, RewardParams params0, const DrmTrainOptions& options);

double pairwise_accuracy(const RewardParams& params, std::span<const FeaturePair> pairs);

nlohmann::json checkpoint_json(const RewardParams& params);
RewardParams params_from_checkpoint(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Generative reward: a two-way softmax policy over (First, Second) trained with
// the group-relative clipped surrogate and binary rewards.

struct GrpoConfig {
    std::uint32_t group_size = 4;
    double clip_epsilon = 0.2;
    double kl_beta = 1e-3;
    double temperature = 1.0;
    double learning_rate = 0.1;
    std::uint32_t steps_per_generation = 4;

    void validate() const;
};

// pi(First | x) = sigmoid(theta . x / temperature).
struct PolicyParams {
    std::vector<double> theta;
};

enum class Choice : std::uint8_t { First = 0, Second = 1 };

double prob_first(const PolicyParams& policy, std::span<const double> features, double temperature);
double choice_probability(const PolicyParams& policy, std::span<const double> features, Choice c, double temperature);

// (r - mean) / population std; all zeros when the std is zero.
std::vector<double> grpo_advantages(std::span<const double> rewards);

struct GrpoGroup {
    std::vector<double> features;
    std::vector<Choice> picks;
    std::vector<double> rewards;    // each 0.0 or 1.0
    std::vector<double> old_probs;  // pi_old(pick) recorded at sampling time
};

struct GrpoObjective {
    double value = 0.0;
    std::vector<double> gradient;
};

// J = mean_i [min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta * KL_i],
// KL_i = r_i - log r_i - 1 with r_i = pi_old / pi_theta on the realized pick.
GrpoObjective grpo_objective(const PolicyParams& policy, std::span<const GrpoGroup> groups, const GrpoConfig& config);

struct GrpoStepResult {
    PolicyParams policy;
    double surrogate = 0.0;  // J at the pre-update parameters
};

// One gradient-ascent update on J.
GrpoStepResult grpo_step(const PolicyParams& policy, std::span<const GrpoGroup> groups, const GrpoConfig& config);

// A context the policy must pick for; reward is 1 when the pick equals `correct`.
struct PickContext {
    std::vector<double> features;
    Choice correct = Choice::First;
};

struct GrpoTrainResult {
    PolicyParams policy;
    std::vector<double> mean_correct_prob;  // after each generation
    std::vector<double> surrogate;          // last inner step of each generation
    std::vector<double> mean_reward;        // sampled groups of each generation
};

// Each generation samples one group of group_size picks per context from the
// current policy, then runs steps_per_generation updates against it.
GrpoTrainResult train_grpo(std::span<const PickContext> contexts, PolicyParams init, const GrpoConfig& config,
                           std::uint32_t generations, std::uint64_t seed);

double mean_correct_probability(const PolicyParams& policy, std::span<const PickContext> contexts,
                                double temperature);

// Two contexts, x = (1, +1) wants First and x = (1, -1) wants Second.
std::vector<PickContext> two_choice_bandit();

// ---------------------------------------------------------------------------

// Central differences per coordinate; returns max |analytic - numeric| /
// max(1, |numeric|). Throws InvalidInput on h <= 0, a size mismatch or a
// non-finite evaluation.
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_gradient, std::span<const double> params, double h);

}  // namespace prefjudge
