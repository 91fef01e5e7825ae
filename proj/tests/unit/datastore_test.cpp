#include <gtest/gtest.h>

#include <thread>

#include "prefjudge/bon.hpp"
#include "prefjudge/datastore.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/eval.hpp"
#include "prefjudge/pairs.hpp"
#include "prefjudge/review.hpp"
#include "prefjudge/reward.hpp"
#include "prefjudge/simulation.hpp"
#include "temp_dir.hpp"

namespace prefjudge {
namespace {

using testing::slurp;
using testing::spit;
using testing::TempDir;

RolloutRecord sample_record() {
    RolloutRecord r;
    r.sample_id = "s1";
    r.model_name = "m";
    r.rollout_index = 2;
    r.perturbation = PerturbationOp::frame_reduce(4);
    r.frame_spec = apply_perturbation(base_spec(45.0), r.perturbation);
    r.raw_text = "naïve “quotes” \\ and \"escapes\"\n\t<answer>B</answer>";
    r.extracted_answer = "B";
    r.verdict = Verdict::Correct;
    r.token_estimate = 6;
    r.verify_method = "Deterministic";
    return r;
}

void expect_canonical(const nlohmann::json& j) {
    const auto line = canonical_dump(j);
    EXPECT_EQ(canonical_dump(nlohmann::json::parse(line)), line);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_TRUE(j.contains("schema_version")) << line;
}

TEST(Canonical, RoundTripsEverySchema) {
    Sample s{"s1", "What?", GroundTruth::choice("(b)"), 12.5, Dimension::VideoReasoning};
    expect_canonical(nlohmann::json(s));
    EXPECT_EQ(nlohmann::json(s).get<Sample>().ground_truth.value, "B");

    const auto r = sample_record();
    expect_canonical(nlohmann::json(r));
    const auto r2 = nlohmann::json(r).get<RolloutRecord>();
    EXPECT_EQ(canonical_dump(nlohmann::json(r2)), canonical_dump(nlohmann::json(r)));

    auto pairs = sim::synthetic_pairs(3, 1);
    for (const auto& p : pairs) {
        expect_canonical(nlohmann::json(p));
        EXPECT_EQ(canonical_dump(nlohmann::json(nlohmann::json(p).get<PreferencePair>())), canonical_dump(nlohmann::json(p)));
    }

    ReviewVerdict v{"pair-1", ReviewDecision::DropOther, "rev", "note ✓", "2026-01-01T00:00:00Z"};
    expect_canonical(to_json(v));
    EXPECT_TRUE(review_verdict_from_json(to_json(v)).same_content(v));

    TrialRecord t{"pair-1", 3, Order::RejectedFirst, "[answer]2[/answer]", Pick::Second, ""};
    expect_canonical(to_json(t));

    auto sets = sim::synthetic_candidate_sets(2, 3, 0.5, 1);
    for (const auto& c : sets) {
        expect_canonical(nlohmann::json(c));
        EXPECT_EQ(canonical_dump(nlohmann::json(nlohmann::json(c).get<CandidateSet>())), canonical_dump(nlohmann::json(c)));
    }

    DiscardReport report;
    report.samples = 4;
    report.discarded[DiscardReason::TooShort] = 1;
    expect_canonical(to_json(report));

    auto eval = eval_pairwise(pairs, sim::always_first_judge(), {});
    expect_canonical(to_json(eval));
    expect_canonical(to_json(make_manifest(Stage::Pair, 1, {{"a", 1}}, {"in"}, {"out"})));
    expect_canonical(checkpoint_json(RewardParams{{0.5, -0.25}, 0.125}));
}

TEST(Canonical, KeyOrderDoesNotMatter) {
    const auto a = nlohmann::json::parse(R"({"b":1,"a":{"y":2,"x":[3,{"k":1,"j":2}]}})");
    EXPECT_EQ(canonical_dump(a), R"({"a":{"x":[3,{"j":2,"k":1}],"y":2},"b":1})");
    EXPECT_EQ(config_digest(a), config_digest(nlohmann::json::parse(R"({"a":{"y":2,"x":[3,{"j":2,"k":1}]},"b":1})")));
    EXPECT_NE(config_digest(a), config_digest(nlohmann::json::parse(R"({"b":2})")));
    EXPECT_EQ(config_digest(a).size(), 64u);
}

TEST(Canonical, DoublesRoundTrip) {
    for (double d : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -0.0}) {
        const nlohmann::json j{{"v", d}, {"schema_version", "1.0"}};
        expect_canonical(j);
        EXPECT_EQ(nlohmann::json::parse(canonical_dump(j))["v"].get<double>(), d);
    }
}

TEST(SchemaVersion, ReadersRejectOtherMajors) {
    EXPECT_NO_THROW(check_schema_version({{"schema_version", "1.7"}}));
    EXPECT_THROW(check_schema_version({{"schema_version", "2.0"}}), DataIntegrityError);
    EXPECT_THROW(check_schema_version({{"x", 1}}), DataIntegrityError);
    EXPECT_THROW(check_schema_version({{"schema_version", "abc"}}), DataIntegrityError);

    TempDir dir;
    spit(dir / "f.jsonl", "{\"schema_version\":\"1.0\",\"a\":1}\n{\"schema_version\":\"2.0\",\"a\":2}\n");
    try {
        read_jsonl(dir / "f.jsonl");
        FAIL() << "expected DataIntegrityError";
    } catch (const DataIntegrityError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}

TEST(Jsonl, MalformedMiddleLineNamesTheLine) {
    TempDir dir;
    spit(dir / "f.jsonl", "{\"schema_version\":\"1.0\"}\n{oops\n{\"schema_version\":\"1.0\"}\n");
    try {
        read_jsonl(dir / "f.jsonl");
        FAIL();
    } catch (const DataIntegrityError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
    EXPECT_TRUE(read_jsonl(dir / "missing.jsonl").empty());
}

TEST(Quarantine, UnterminatedTailMovesToSidecar) {
    TempDir dir;
    const auto f = dir / "rollouts.jsonl";
    const std::string good = "{\"schema_version\":\"1.0\",\"i\":1}\n{\"schema_version\":\"1.0\",\"i\":2}\n";
    spit(f, good + "{\"schema_version\":\"1.0\",\"i\":3,\"te");
    const auto q = quarantine_torn_tail(f);
    EXPECT_EQ(q.valid_bytes, good.size());
    EXPECT_GT(q.quarantined_bytes, 0u);
    EXPECT_EQ(slurp(f), good);
    EXPECT_EQ(slurp(f.string() + ".corrupt"), "{\"schema_version\":\"1.0\",\"i\":3,\"te\n");
    EXPECT_EQ(read_jsonl(f).size(), 2u);
}

TEST(Quarantine, TerminatedGarbageLineIsQuarantined) {
    TempDir dir;
    const auto f = dir / "r.jsonl";
    const std::string good = "{\"schema_version\":\"1.0\"}\n";
    spit(f, good + "\x01\x02garbage\n");
    quarantine_torn_tail(f);
    EXPECT_EQ(slurp(f), good);
}

TEST(Quarantine, CleanFileUntouched) {
    TempDir dir;
    const auto f = dir / "r.jsonl";
    spit(f, "{\"schema_version\":\"1.0\"}\n");
    const auto q = quarantine_torn_tail(f);
    EXPECT_EQ(q.quarantined_bytes, 0u);
    EXPECT_FALSE(std::filesystem::exists(f.string() + ".corrupt"));
    EXPECT_EQ(quarantine_torn_tail(dir / "absent").valid_bytes, 0u);
}

TEST(Quarantine, WriterQuarantinesOnOpenThenAppends) {
    TempDir dir;
    const auto f = dir / "r.jsonl";
    spit(f, "{\"schema_version\":\"1.0\",\"i\":1}\n{\"schema_ver");
    {
        JsonlWriter w(f);
        EXPECT_GT(w.quarantine().quarantined_bytes, 0u);
        w.append(with_schema_version({{"i", 2}}));
    }
    const auto rows = read_jsonl(f);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1]["i"], 2);
}

TEST(Writer, ConcurrentAppendsNeverInterleave) {
    TempDir dir;
    const auto f = dir / "c.jsonl";
    {
        JsonlWriter w(f);
        std::vector<std::jthread> threads;
        for (int t = 0; t < 4; ++t) {
            threads.emplace_back([&w, t] {
                for (int i = 0; i < 250; ++i)
                    w.append(with_schema_version({{"t", t}, {"i", i}, {"pad", std::string(200, 'x')}}));
            });
        }
    }
    const auto rows = read_jsonl(f);
    EXPECT_EQ(rows.size(), 1000u);
}

TEST(Resume, KeysComeFromPersistedRecords) {
    TempDir dir;
    const auto f = dir / "r.jsonl";
    append_record(f, nlohmann::json(sample_record()));
    const auto keys = resume_keys(f, {"sample_id", "model_name", "rollout_index"});
    ASSERT_EQ(keys.size(), 1u);
    EXPECT_EQ(*keys.begin(), (CompositeKey{"s1", "m", "2"}));
    EXPECT_THROW(resume_keys(f, {"missing"}), DataIntegrityError);
}

TEST(Manifest, KeyedByStageAndPure) {
    TempDir dir;
    const auto m = dir / "manifest.json";
    record_manifest(m, make_manifest(Stage::Rollout, 5, {{"x", 1}}, {"a"}, {"b"}));
    record_manifest(m, make_manifest(Stage::Pair, 5, {{"x", 1}}, {"b"}, {"c"}));
    const auto doc = read_json_file(m);
    EXPECT_TRUE(doc.contains("Rollout"));
    EXPECT_TRUE(doc.contains("Pair"));
    EXPECT_EQ(doc["Pair"]["global_seed"], 5);
    EXPECT_EQ(doc["Pair"]["config_digest"], doc["Rollout"]["config_digest"]);
    const auto a = make_manifest(Stage::Eval, 1, {{"x", 1}}, {}, {});
    const auto b = make_manifest(Stage::Eval, 1, {{"x", 1}}, {}, {});
    EXPECT_NE(a.run_id, b.run_id);
    EXPECT_EQ(a.config_digest, b.config_digest);
}

TEST(JsonFile, AtomicWriteAndMalformedRead) {
    TempDir dir;
    write_json_file(dir / "a.json", {{"k", 1}});
    EXPECT_EQ(read_json_file(dir / "a.json")["k"], 1);
    EXPECT_FALSE(std::filesystem::exists(dir / "a.json.tmp"));
    spit(dir / "b.json", "{nope");
    EXPECT_THROW(read_json_file(dir / "b.json"), DataIntegrityError);
}

}  // namespace
}  // namespace prefjudge
