#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

namespace prefjudge {

struct ModelEndpoint {
    std::string name;
    std::string base_url;
    std::string model_id;
    // Name of the environment variable holding the bearer token; empty means
    // no Authorization header.
    std::string auth_token_ref;
    int max_parallel = 1;
};

struct GenerationParams {
    double temperature = 0.95;
    double top_p = 0.95;
    std::optional<int> top_k = 50;
    int max_tokens = 4096;
};

void validate(const ModelEndpoint& endpoint);
void validate(const GenerationParams& params);

void to_json(nlohmann::json& j, const ModelEndpoint& e);
void from_json(const nlohmann::json& j, ModelEndpoint& e);
void to_json(nlohmann::json& j, const GenerationParams& p);
void from_json(const nlohmann::json& j, GenerationParams& p);

// Exponential backoff with jitter: delay_k = base * multiplier^k * U[0.5, 1).
// A call makes at most max_retries + 1 attempts.
struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{1000};
    double multiplier = 2.0;
    bool jitter = true;

    std::chrono::milliseconds delay_for(int retry_index, double unit_jitter) const;
};

struct ChatRequest {
    std::string prompt;
    GenerationParams params;
    // Opaque manifest forwarded in the request's "metadata" field.
    nlohmann::json metadata = nlohmann::json::object();
};

// OpenAI-compatible chat-completions request body.
nlohmann::json build_request_body(const ModelEndpoint& endpoint, const ChatRequest& request);

// choices[0].message.content; throws TransportError on an unexpected shape.
std::string parse_completion_content(const nlohmann::json& response);

// One attempt against a transport. Throws TransportError on failure.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ModelEndpoint& endpoint, const ChatRequest& request) = 0;
};

// POST {base_url}/chat/completions over HTTP(S).
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(std::chrono::seconds timeout = std::chrono::seconds(300)) : timeout_(timeout) {}
    std::string complete(const ModelEndpoint& endpoint, const ChatRequest& request) override;

private:
    std::chrono::seconds timeout_;
};

// Endpoint handle with retries and a cap of max_parallel requests in flight.
// Safe to share across threads.
class ChatClient {
public:
    ChatClient(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend, RetryPolicy retry = {});

    std::string complete(const ChatRequest& request);

    // Convenience wrapper for single-prompt calls (judges, matchers).
    std::string complete(const std::string& prompt, const GenerationParams& params = {});

    const ModelEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    ModelEndpoint endpoint_;
    std::shared_ptr<ChatBackend> backend_;
    RetryPolicy retry_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

// Text-in/text-out callable; throws TransportError on failure.
using TextCompleter = std::function<std::string(const std::string& prompt)>;

TextCompleter as_completer(std::shared_ptr<ChatClient> client, GenerationParams params = {});

}  // namespace prefjudge
