#include "prefjudge/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/random.hpp"

namespace prefjudge {

namespace {

// sigmoid(x) without overflow for either sign.
double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + exp(x)).
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sparse_dot(std::span<const double> dense, const SparseFeatures& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.index.size(); ++k) s += dense[f.index[k]] * f.value[k];
    return s;
}

void check_dim(const RewardParams& params, std::size_t dim) {
    if (dim != params.weights.size())
        throw InvalidInput("feature dimension " + std::to_string(dim) + " does not match model dimension " +
                           std::to_string(params.weights.size()));
}

}  // namespace

BtLoss bt_loss(double r_chosen, double r_rejected) {
    if (!std::isfinite(r_chosen) || !std::isfinite(r_rejected)) throw InvalidInput("bt_loss inputs must be finite");
    const double delta = r_chosen - r_rejected;
    // d/d delta of -log sigma(delta) is sigma(delta) - 1 = -sigma(-delta).
    const double s = sigmoid(-delta);
    return {softplus(-delta), -s, s};
}

double score(const RewardParams& params, std::span<const double> features) {
    check_dim(params, features.size());
    return std::inner_product(features.begin(), features.end(), params.weights.begin(), 0.0) + params.bias;
}

double score(const RewardParams& params, const SparseFeatures& features) {
    check_dim(params, features.dim);
    return sparse_dot(params.weights, features) + params.bias;
}

HashedFeaturizer::HashedFeaturizer(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) throw InvalidInput("feature dimension must be positive");
}

SparseFeatures HashedFeaturizer::operator()(std::string_view text) const {
    std::map<std::uint32_t, double> acc;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const auto h = fnv1a64(token);
        acc[static_cast<std::uint32_t>(h % dim_)] += (h >> 63) ? -1.0 : 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            token.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();

    SparseFeatures f;
    f.dim = dim_;
    double norm = 0.0;
    for (const auto& [i, v] : acc) {
        if (v == 0.0) continue;
        f.index.push_back(i);
        f.value.push_back(v);
        norm += v * v;
    }
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (auto& v : f.value) v /= norm;
    }
    return f;
}

double mean_bt_loss(const RewardParams& params, std::span<const FeaturePair> pairs) {
    if (pairs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : pairs) total += bt_loss(score(params, p.chosen), score(params, p.rejected)).loss;
    return total / static_cast<double>(pairs.size());
}

DrmTrainResult train_drm(std::span<const FeaturePair> pairs, RewardParams params0, const DrmTrainOptions& options) {
    if (pairs.empty()) throw InvalidInput("train_drm needs at least one pair");
    if (!(options.learning_rate >= 0.0)) throw InvalidInput("learning_rate must be nonnegative");
    if (options.batch_size == 0) throw InvalidInput("batch_size must be positive");
    for (const auto& p : pairs) {
        check_dim(params0, p.chosen.dim);
        check_dim(params0, p.rejected.dim);
    }

    DrmTrainResult result{std::move(params0), {}};
    auto& params = result.params;
    auto checked_loss = [&](const std::string& when) {
        double loss = NAN;
        try {
            loss = mean_bt_loss(params, pairs);
        } catch (const InvalidInput&) {
        }
        if (!std::isfinite(loss)) throw TrainingDiverged("mean ranking loss became non-finite " + when);
        return loss;
    };
    result.loss_trace.push_back(checked_loss("before training"));

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, {"train_drm"}));

    for (std::uint32_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            const double step = options.learning_rate / static_cast<double>(stop - start);
            // Accumulate per-pair coefficients first so the batch gradient is
            // taken at fixed parameters.
            std::vector<std::pair<std::size_t, double>> coeffs;
            double bias_grad = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const auto& p = pairs[order[k]];
                const double sc = score(params, p.chosen);
                const double sr = score(params, p.rejected);
                const auto l = std::isfinite(sc) && std::isfinite(sr) ? bt_loss(sc, sr) : BtLoss{NAN, 0.0, 0.0};
                if (!std::isfinite(l.loss)) {
                    std::ostringstream msg;
                    msg << "ranking loss became non-finite at epoch " << epoch << ", pair " << order[k];
                    throw TrainingDiverged(msg.str());
                }
                coeffs.emplace_back(order[k], l.grad_chosen);
                bias_grad += l.grad_chosen + l.grad_rejected;
            }
            for (const auto& [idx, g] : coeffs) {
                // grad_rejected == -grad_chosen
                const auto& p = pairs[idx];
                for (std::size_t t = 0; t < p.chosen.index.size(); ++t)
                    params.weights[p.chosen.index[t]] -= step * g * p.chosen.value[t];
                for (std::size_t t = 0; t < p.rejected.index.size(); ++t)
                    params.weights[p.rejected.index[t]] += step * g * p.rejected.value[t];
            }
            params.bias -= step * bias_grad;
        }
        result.loss_trace.push_back(checked_loss("after epoch " + std::to_string(epoch)));
    }
    return result;
}

double pairwise_accuracy(const RewardParams& params, std::span<const FeaturePair> pairs) {
    if (pairs.empty()) throw InvalidInput("no pairs");
    std::size_t hits = 0;
    for (const auto& p : pairs) hits += score(params, p.chosen) > score(params, p.rejected) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

nlohmann::json checkpoint_json(const RewardParams& params) {
    return with_schema_version(
        {{"weights", params.weights}, {"bias", params.bias}, {"feature_dim", params.weights.size()}});
}

RewardParams params_from_checkpoint(const nlohmann::json& j) {
    RewardParams p;
    j.at("weights").get_to(p.weights);
    j.at("bias").get_to(p.bias);
    if (j.contains("feature_dim") && j["feature_dim"].get<std::size_t>() != p.weights.size())
        throw DataIntegrityError("checkpoint feature_dim does not match its weight vector");
    for (double w : p.weights) {
        if (!std::isfinite(w)) throw DataIntegrityError("checkpoint contains non-finite weights");
    }
    return p;
}

// ---------------------------------------------------------------------------

void GrpoConfig::validate() const {
    if (group_size < 2) throw InvalidInput("group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw InvalidInput("clip_epsilon must lie in (0, 1)");
    if (!(kl_beta >= 0.0)) throw InvalidInput("kl_beta must be >= 0");
    if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
    if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
    if (steps_per_generation == 0) throw InvalidInput("steps_per_generation must be positive");
}

double prob_first(const PolicyParams& policy, std::span<const double> features, double temperature) {
    if (features.size() != policy.theta.size()) throw InvalidInput("feature dimension does not match policy");
    const double z = std::inner_product(features.begin(), features.end(), policy.theta.begin(), 0.0) / temperature;
    return sigmoid(z);
}

double choice_probability(const PolicyParams& policy, std::span<const double> features, Choice c,
                          double temperature) {
    const double p = prob_first(policy, features, temperature);
    return c == Choice::First ? p : 1.0 - p;
}

std::vector<double> grpo_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw InvalidInput("a group needs at least two rewards");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> adv(rewards.size(), 0.0);
    if (sd == 0.0) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

GrpoObjective grpo_objective(const PolicyParams& policy, std::span<const GrpoGroup> groups, const GrpoConfig& config) {
    config.validate();
    const std::size_t dim = policy.theta.size();
    GrpoObjective out{0.0, std::vector<double>(dim, 0.0)};
    std::size_t samples = 0;

    for (const auto& g : groups) {
        if (g.features.size() != dim) throw InvalidInput("group feature dimension does not match policy");
        if (g.picks.size() != g.rewards.size() || g.picks.size() != g.old_probs.size())
            throw InvalidInput("group picks, rewards and old_probs must have equal length");
        for (double r : g.rewards) {
            if (r != 0.0 && r != 1.0) throw InvalidInput("rewards must be binary (0.0 or 1.0)");
        }
        const auto adv = grpo_advantages(g.rewards);
        const double p1 = prob_first(policy, g.features, config.temperature);

        for (std::size_t i = 0; i < g.picks.size(); ++i) {
            const double old = g.old_probs[i];
            if (!(old > 0.0) || old > 1.0) throw InvalidInput("old pick probability must lie in (0, 1]");
            const bool first = g.picks[i] == Choice::First;
            const double pi = first ? p1 : 1.0 - p1;
            // d log pi / d z for the realized pick, z = theta . x / T.
            const double dlogpi_dz = first ? 1.0 - p1 : -p1;

            const double rho = pi / old;
            const double a = adv[i];
            const double clipped = std::clamp(rho, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
            const double unclipped_term = rho * a;
            const double clipped_term = clipped * a;
            const bool use_unclipped = unclipped_term <= clipped_term;

            const double r = old / pi;
            const double kl = r - std::log(r) - 1.0;
            out.value += std::min(unclipped_term, clipped_term) - config.kl_beta * kl;

            // dJ_i/dz = [use_unclipped] * A * rho * dlogpi - beta * (1 - r) * dlogpi
            double coef = -config.kl_beta * (1.0 - r) * dlogpi_dz;
            if (use_unclipped) coef += a * rho * dlogpi_dz;
            coef /= config.temperature;
            for (std::size_t d = 0; d < dim; ++d) out.gradient[d] += coef * g.features[d];
            ++samples;
        }
    }
    if (samples > 0) {
        out.value /= static_cast<double>(samples);
        for (auto& v : out.gradient) v /= static_cast<double>(samples);
    }
    return out;
}

GrpoStepResult grpo_step(const PolicyParams& policy, std::span<const GrpoGroup> groups, const GrpoConfig& config) {
    const auto obj = grpo_objective(policy, groups, config);
    GrpoStepResult out{policy, obj.value};
    for (std::size_t d = 0; d < out.policy.theta.size(); ++d)
        out.policy.theta[d] += config.learning_rate * obj.gradient[d];
    return out;
}

double mean_correct_probability(const PolicyParams& policy, std::span<const PickContext> contexts,
                                double temperature) {
    if (contexts.empty()) throw InvalidInput("no contexts");
    double s = 0.0;
    for (const auto& c : contexts) s += choice_probability(policy, c.features, c.correct, temperature);
    return s / static_cast<double>(contexts.size());
}

GrpoTrainResult train_grpo(std::span<const PickContext> contexts, PolicyParams init, const GrpoConfig& config,
                           std::uint32_t generations, std::uint64_t seed) {
    config.validate();
    if (contexts.empty()) throw InvalidInput("train_grpo needs at least one context");
    GrpoTrainResult result{std::move(init), {}, {}, {}};
    Rng rng(derive_seed(seed, {"train_grpo"}));

    for (std::uint32_t gen = 0; gen < generations; ++gen) {
        std::vector<GrpoGroup> groups;
        groups.reserve(contexts.size());
        double reward_sum = 0.0;
        for (const auto& ctx : contexts) {
            GrpoGroup g;
            g.features = ctx.features;
            const double p1 = prob_first(result.policy, ctx.features, config.temperature);
            for (std::uint32_t k = 0; k < config.group_size; ++k) {
                const Choice c = uniform01(rng) < p1 ? Choice::First : Choice::Second;
                g.picks.push_back(c);
                g.old_probs.push_back(c == Choice::First ? p1 : 1.0 - p1);
                g.rewards.push_back(c == ctx.correct ? 1.0 : 0.0);
                reward_sum += g.rewards.back();
            }
            groups.push_back(std::move(g));
        }
        double surrogate = 0.0;
        for (std::uint32_t s = 0; s < config.steps_per_generation; ++s) {
            auto step = grpo_step(result.policy, groups, config);
            result.policy = std::move(step.policy);
            surrogate = step.surrogate;
        }
        result.surrogate.push_back(surrogate);
        result.mean_reward.push_back(reward_sum / static_cast<double>(contexts.size() * config.group_size));
        result.mean_correct_prob.push_back(mean_correct_probability(result.policy, contexts, config.temperature));
    }
    return result;
}

std::vector<PickContext> two_choice_bandit() {
    return {{{1.0, 1.0}, Choice::First}, {{1.0, -1.0}, Choice::Second}};
}

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_gradient, std::span<const double> params, double h) {
    if (!(h > 0.0)) throw InvalidInput("step size h must be positive");
    if (analytic_gradient.size() != params.size()) throw InvalidInput("gradient and parameter sizes differ");
    std::vector<double> x(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double saved = x[j];
        x[j] = saved + h;
        const double up = f(x);
        x[j] = saved - h;
        const double down = f(x);
        x[j] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) throw InvalidInput("non-finite function evaluation");
        // (saved + h) - (saved - h) may differ from 2h after rounding.
        const double numeric = (up - down) / ((saved + h) - (saved - h));
        const double err = std::abs(analytic_gradient[j] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace prefjudge
