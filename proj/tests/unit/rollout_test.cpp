#include <gtest/gtest.h>

#include <atomic>

#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/rollout.hpp"
#include "temp_dir.hpp"

namespace prefjudge {
namespace {

using testing::TempDir;

std::vector<Sample> samples(std::size_t n) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"s" + std::to_string(i), "Question " + std::to_string(i), GroundTruth::choice("A"),
                       10.0 + 100.0 * static_cast<double>(i), Dimension::VideoReasoning});
    return out;
}

std::vector<ModelEndpoint> endpoints() {
    return {{"m1", "http://x/v1", "id1", "", 1}, {"m2", "http://y/v1", "id2", "", 1}};
}

// Answers A for even rollout indices, B otherwise; can fail a fixed set of sample ids.
class FakeBackend : public ChatBackend {
public:
    std::string complete(const ModelEndpoint&, const ChatRequest& r) override {
        ++calls;
        if (fail_sample == r.metadata["sample_id"].get<std::string>()) throw TransportError("down", 503);
        const auto idx = r.metadata["rollout_index"].get<int>();
        return "some reasoning here <answer>" + std::string(idx % 2 == 0 ? "A" : "B") + "</answer>";
    }
    std::atomic<int> calls{0};
    std::string fail_sample;
};

std::vector<std::shared_ptr<ChatClient>> clients(const std::shared_ptr<FakeBackend>& backend) {
    RetryPolicy retry;
    retry.max_retries = 0;
    std::vector<std::shared_ptr<ChatClient>> out;
    for (const auto& e : endpoints()) out.push_back(std::make_shared<ChatClient>(e, backend, retry));
    return out;
}

TEST(Plan, CanonicalOrderAndDeterminism) {
    const auto s = samples(3);
    const auto plan = plan_rollouts(s, endpoints(), 4, true, 9);
    ASSERT_EQ(plan.size(), 24u);
    EXPECT_EQ(plan[0].sample_index, 0u);
    EXPECT_EQ(plan[4].endpoint_index, 1u);
    EXPECT_EQ(plan[23].rollout_index, 3u);
    const auto again = plan_rollouts(s, endpoints(), 4, true, 9);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        EXPECT_EQ(plan[i].perturbation, again[i].perturbation);
        EXPECT_EQ(plan[i].frame_spec, again[i].frame_spec);
        EXPECT_TRUE(plan[i].frame_spec.valid());
    }
    // A task's perturbation does not depend on which other samples are planned.
    const std::vector<Sample> tail(s.begin() + 2, s.end());
    const auto sub = plan_rollouts(tail, endpoints(), 4, true, 9);
    for (std::size_t i = 0; i < sub.size(); ++i) EXPECT_EQ(sub[i].perturbation, plan[16 + i].perturbation);

    for (const auto& t : plan_rollouts(s, endpoints(), 2, false, 9))
        EXPECT_EQ(t.perturbation.kind, PerturbationKind::Normal);
    auto dup = endpoints();
    dup[1].name = "m1";
    EXPECT_THROW(plan_rollouts(s, dup, 1, true, 0), InvalidInput);
}

TEST(Metadata, DropoutIsTextOnly) {
    const auto s = samples(1);
    RolloutTask t{0, 0, 2, PerturbationOp::normal(), base_spec(10.0)};
    auto m = rollout_metadata(s[0], t);
    EXPECT_EQ(m["sample_id"], "s0");
    EXPECT_EQ(m["rollout_index"], 2);
    EXPECT_EQ(m["modality"], "video");
    EXPECT_EQ(m["frame_spec"]["max_frames"], 20);
    t.perturbation = PerturbationOp::dropout();
    m = rollout_metadata(s[0], t);
    EXPECT_EQ(m["modality"], "text");
    EXPECT_FALSE(m.contains("frame_spec"));
}

TEST(Run, WritesVerifiedRecordsAndResumes) {
    TempDir dir;
    const auto out = dir / "rollouts.jsonl";
    auto backend = std::make_shared<FakeBackend>();
    RolloutOptions opt;
    opt.seed = 4;
    opt.workers = 3;
    opt.max_new_calls = 5;
    auto stats = run_rollouts(samples(2), clients(backend), opt, out);
    EXPECT_EQ(stats.planned, 16u);
    EXPECT_EQ(stats.attempted, 5u);
    EXPECT_EQ(backend->calls.load(), 5);

    opt.max_new_calls.reset();
    stats = run_rollouts(samples(2), clients(backend), opt, out);
    EXPECT_EQ(stats.skipped_existing, 5u);
    EXPECT_EQ(stats.attempted, 11u);
    EXPECT_EQ(backend->calls.load(), 16);

    const auto rows = read_jsonl(out);
    ASSERT_EQ(rows.size(), 16u);
    std::set<CompositeKey> keys;
    for (const auto& j : rows) {
        const auto r = j.get<RolloutRecord>();
        keys.insert({r.sample_id, r.model_name, std::to_string(r.rollout_index)});
        EXPECT_EQ(r.verdict, r.rollout_index % 2 == 0 ? Verdict::Correct : Verdict::Incorrect);
        EXPECT_EQ(r.token_estimate, 4u);
    }
    EXPECT_EQ(keys.size(), 16u);

    stats = run_rollouts(samples(2), clients(backend), opt, out);
    EXPECT_EQ(stats.attempted, 0u);
    EXPECT_EQ(backend->calls.load(), 16);
}

TEST(Run, TransportFailuresAreCountedNotPersisted) {
    TempDir dir;
    const auto out = dir / "rollouts.jsonl";
    auto backend = std::make_shared<FakeBackend>();
    backend->fail_sample = "s1";
    RolloutOptions opt;
    const auto stats = run_rollouts(samples(2), clients(backend), opt, out);
    EXPECT_EQ(stats.transport_failures, 8u);
    EXPECT_EQ(read_jsonl(out).size(), 8u);

    backend->fail_sample.clear();
    const auto retry = run_rollouts(samples(2), clients(backend), opt, out);
    EXPECT_EQ(retry.attempted, 8u);
    EXPECT_EQ(retry.transport_failures, 0u);
    EXPECT_EQ(read_jsonl(out).size(), 16u);
}

TEST(Run, InvalidOptions) {
    TempDir dir;
    RolloutOptions opt;
    opt.n_per_model = 0;
    auto backend = std::make_shared<FakeBackend>();
    EXPECT_THROW(run_rollouts(samples(1), clients(backend), opt, dir / "r.jsonl"), InvalidInput);
    EXPECT_THROW(run_rollouts(samples(1), {}, RolloutOptions{}, dir / "r.jsonl"), InvalidInput);
}

}  // namespace
}  // namespace prefjudge
