#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "mock_chat_server.hpp"
#include "prefjudge/chat.hpp"
#include "prefjudge/errors.hpp"
#include "prefjudge/parallel.hpp"

namespace prefjudge {
namespace {

ModelEndpoint endpoint(std::string base_url = "http://127.0.0.1:1/v1", int max_parallel = 1) {
    return {"ep", std::move(base_url), "model-x", "", max_parallel};
}

RetryPolicy fast_retry(int max_retries) {
    RetryPolicy r;
    r.max_retries = max_retries;
    r.base_delay = std::chrono::milliseconds(1);
    r.jitter = false;
    return r;
}

// Fails with the scripted statuses, then succeeds.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<int> failures) : failures_(std::move(failures)) {}
    std::string complete(const ModelEndpoint&, const ChatRequest&) override {
        const auto n = attempts++;
        if (n < failures_.size()) throw TransportError("scripted", failures_[n]);
        return "ok";
    }
    std::atomic<std::size_t> attempts{0};

private:
    std::vector<int> failures_;
};

TEST(RequestBody, ChatCompletionsShape) {
    ChatRequest req{"hello", GenerationParams{}, {{"sample_id", "s1"}}};
    const auto body = build_request_body(endpoint(), req);
    EXPECT_EQ(body["model"], "model-x");
    EXPECT_EQ(body["messages"][0]["role"], "user");
    EXPECT_EQ(body["messages"][0]["content"], "hello");
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.95);
    EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.95);
    EXPECT_EQ(body["top_k"], 50);
    EXPECT_EQ(body["max_tokens"], 4096);
    EXPECT_EQ(body["stream"], false);
    EXPECT_EQ(body["metadata"]["sample_id"], "s1");

    req.params.top_k.reset();
    req.metadata = nlohmann::json::object();
    const auto bare = build_request_body(endpoint(), req);
    EXPECT_FALSE(bare.contains("top_k"));
    EXPECT_FALSE(bare.contains("metadata"));
}

TEST(RequestBody, ParsesContentOrThrowsTransport) {
    EXPECT_EQ(parse_completion_content(testing::completion_envelope("m", "hi")), "hi");
    EXPECT_THROW(parse_completion_content({{"choices", nlohmann::json::array()}}), TransportError);
}

TEST(Validation, EndpointAndParams) {
    EXPECT_NO_THROW(validate(endpoint()));
    EXPECT_THROW(validate(endpoint("ftp://x")), InvalidInput);
    EXPECT_THROW(validate(endpoint("http://x", 0)), InvalidInput);
    GenerationParams p;
    p.top_p = 0.0;
    EXPECT_THROW(validate(p), InvalidInput);
    p = {};
    p.top_k = 0;
    EXPECT_THROW(validate(p), InvalidInput);
}

TEST(Retry, BackoffIsExponentialWithJitterBand) {
    RetryPolicy r;
    EXPECT_EQ(r.delay_for(0, 1.0).count(), 1000);
    EXPECT_EQ(r.delay_for(2, 1.0).count(), 4000);
    EXPECT_EQ(r.delay_for(2, 0.0).count(), 2000);
    r.jitter = false;
    EXPECT_EQ(r.delay_for(3, 0.0).count(), 8000);
}

TEST(Retry, TransientFailuresAreRetried) {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<int>{503, 0, 429});
    ChatClient client(endpoint(), backend, fast_retry(3));
    EXPECT_EQ(client.complete("p"), "ok");
    EXPECT_EQ(backend->attempts, 4u);
}

TEST(Retry, GivesUpAfterMaxRetries) {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<int>{500, 500, 500, 500, 500});
    ChatClient client(endpoint(), backend, fast_retry(2));
    EXPECT_THROW(client.complete("p"), TransportError);
    EXPECT_EQ(backend->attempts, 3u);
}

TEST(Retry, ClientErrorsAreNotRetried) {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<int>{400});
    ChatClient client(endpoint(), backend, fast_retry(5));
    try {
        client.complete("p");
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.status(), 400);
        EXPECT_FALSE(e.transient());
    }
    EXPECT_EQ(backend->attempts, 1u);
}

class SlowBackend : public ChatBackend {
public:
    std::string complete(const ModelEndpoint&, const ChatRequest&) override {
        const auto now = ++in_flight;
        auto prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return "x";
    }
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
};

TEST(Concurrency, MaxParallelBoundsInFlightRequests) {
    auto backend = std::make_shared<SlowBackend>();
    ChatClient client(endpoint("http://x", 2), backend, fast_retry(0));
    parallel_for(24, 8, [&](std::size_t) { client.complete("p"); });
    EXPECT_LE(backend->peak.load(), 2);
    EXPECT_GE(backend->peak.load(), 1);
}

TEST(Http, RoundTripAgainstMockServer) {
    testing::MockChatServer server([](const nlohmann::json& body) {
        return testing::MockReply{200, "echo:" + body["messages"][0]["content"].get<std::string>()};
    });
    auto client = std::make_shared<ChatClient>(endpoint(server.base_url()), std::make_shared<HttpChatBackend>(),
                                               fast_retry(0));
    EXPECT_EQ(as_completer(client)("ping"), "echo:ping");
    EXPECT_EQ(server.calls("model-x"), 1u);
}

TEST(Http, ServerErrorSurfacesStatus) {
    testing::MockChatServer server([](const nlohmann::json&) { return testing::MockReply{503, ""}; });
    ChatClient client(endpoint(server.base_url()), std::make_shared<HttpChatBackend>(), fast_retry(1));
    try {
        client.complete("p");
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.status(), 503);
    }
    EXPECT_EQ(server.total_calls(), 2u);
}

TEST(Http, UnreachableEndpointIsTransient) {
    ChatClient client(endpoint("http://127.0.0.1:1/v1"), std::make_shared<HttpChatBackend>(std::chrono::seconds(1)),
                      fast_retry(0));
    try {
        client.complete("p");
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_TRUE(e.transient());
    }
}

TEST(Http, MissingTokenVariableIsConfigError) {
    auto ep = endpoint("http://127.0.0.1:1/v1");
    ep.auth_token_ref = "PREFJUDGE_TEST_UNSET_TOKEN_VAR";
    ::unsetenv(ep.auth_token_ref.c_str());
    HttpChatBackend backend;
    EXPECT_THROW(backend.complete(ep, ChatRequest{"p", {}, {}}), ConfigError);
}

}  // namespace
}  // namespace prefjudge
