#include "prefjudge/chat.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>

#include "prefjudge/errors.hpp"

namespace prefjudge {

void validate(const ModelEndpoint& e) {
    if (e.name.empty()) throw InvalidInput("endpoint name must be nonempty");
    if (e.base_url.rfind("http://", 0) != 0 && e.base_url.rfind("https://", 0) != 0)
        throw InvalidInput("endpoint '" + e.name + "': base_url must start with http:// or https://");
    if (e.model_id.empty()) throw InvalidInput("endpoint '" + e.name + "': model_id must be nonempty");
    if (e.max_parallel < 1) throw InvalidInput("endpoint '" + e.name + "': max_parallel must be >= 1");
}

void validate(const GenerationParams& p) {
    if (!(p.temperature >= 0.0)) throw InvalidInput("temperature must be >= 0");
    if (!(p.top_p > 0.0 && p.top_p <= 1.0)) throw InvalidInput("top_p must lie in (0, 1]");
    if (p.top_k && *p.top_k < 1) throw InvalidInput("top_k must be positive when set");
    if (p.max_tokens < 1) throw InvalidInput("max_tokens must be positive");
}

void to_json(nlohmann::json& j, const ModelEndpoint& e) {
    j = {{"name", e.name},
         {"base_url", e.base_url},
         {"model_id", e.model_id},
         {"auth_token_ref", e.auth_token_ref},
         {"max_parallel", e.max_parallel}};
}

void from_json(const nlohmann::json& j, ModelEndpoint& e) {
    j.at("name").get_to(e.name);
    j.at("base_url").get_to(e.base_url);
    j.at("model_id").get_to(e.model_id);
    e.auth_token_ref = j.value("auth_token_ref", std::string{});
    e.max_parallel = j.value("max_parallel", 1);
}

void to_json(nlohmann::json& j, const GenerationParams& p) {
    j = {{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
    j["top_k"] = p.top_k ? nlohmann::json(*p.top_k) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, GenerationParams& p) {
    p = GenerationParams{};
    if (j.contains("temperature")) j["temperature"].get_to(p.temperature);
    if (j.contains("top_p")) j["top_p"].get_to(p.top_p);
    if (j.contains("max_tokens")) j["max_tokens"].get_to(p.max_tokens);
    if (j.contains("top_k")) {
        if (j["top_k"].is_null())
            p.top_k.reset();
        else
            p.top_k = j["top_k"].get<int>();
    }
}

std::chrono::milliseconds RetryPolicy::delay_for(int retry_index, double unit_jitter) const {
    double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, retry_index);
    if (jitter) ms *= 0.5 + 0.5 * unit_jitter;
    return std::chrono::milliseconds(static_cast<long long>(ms));
}

nlohmann::json build_request_body(const ModelEndpoint& endpoint, const ChatRequest& request) {
    nlohmann::json body{
        {"model", endpoint.model_id},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.params.temperature},
        {"top_p", request.params.top_p},
        {"max_tokens", request.params.max_tokens},
        {"stream", false},
    };
    if (request.params.top_k) body["top_k"] = *request.params.top_k;
    if (!request.metadata.empty()) body["metadata"] = request.metadata;
    return body;
}

std::string parse_completion_content(const nlohmann::json& response) {
    try {
        const auto& content = response.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("unexpected chat-completions response: ") + e.what(), 0);
    }
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
    } else {
        out.origin = url.substr(0, path_start);
        out.prefix = url.substr(path_start);
    }
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

}  // namespace

std::string HttpChatBackend::complete(const ModelEndpoint& endpoint, const ChatRequest& request) {
    const auto url = split_url(endpoint.base_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);

    httplib::Headers headers;
    if (!endpoint.auth_token_ref.empty()) {
        const char* token = std::getenv(endpoint.auth_token_ref.c_str());
        if (token == nullptr)
            throw ConfigError("endpoint '" + endpoint.name + "': environment variable " + endpoint.auth_token_ref +
                              " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    const auto body = build_request_body(endpoint, request).dump();
    auto res = client.Post(url.prefix + "/chat/completions", headers, body, "application/json");
    if (!res) throw TransportError("endpoint '" + endpoint.name + "': " + httplib::to_string(res.error()), 0);
    if (res->status != 200)
        throw TransportError("endpoint '" + endpoint.name + "': HTTP " + std::to_string(res->status), res->status);

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError("endpoint '" + endpoint.name + "': response is not JSON", 0);
    }
    return parse_completion_content(parsed);
}

ChatClient::ChatClient(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend, RetryPolicy retry)
    : endpoint_(std::move(endpoint)),
      backend_(std::move(backend)),
      retry_(retry),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, endpoint_.max_parallel))) {
    validate(endpoint_);
    if (!backend_) throw InvalidInput("ChatClient requires a backend");
    if (retry_.max_retries < 0) throw InvalidInput("max_retries must be >= 0");
}

std::string ChatClient::complete(const ChatRequest& request) {
    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int attempt = 0;; ++attempt) {
        try {
            slots_->acquire();
            struct Release {
                std::counting_semaphore<>* s;
                ~Release() { s->release(); }
            } release{slots_.get()};
            return backend_->complete(endpoint_, request);
        } catch (const TransportError& e) {
            if (!e.transient() || attempt >= retry_.max_retries) throw;
        }
        std::this_thread::sleep_for(retry_.delay_for(attempt, unit(jitter_rng)));
    }
}

std::string ChatClient::complete(const std::string& prompt, const GenerationParams& params) {
    return complete(ChatRequest{prompt, params, nlohmann::json::object()});
}

TextCompleter as_completer(std::shared_ptr<ChatClient> client, GenerationParams params) {
    return [client = std::move(client), params](const std::string& prompt) { return client->complete(prompt, params); };
}

}  // namespace prefjudge
