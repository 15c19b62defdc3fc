#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "mad/openai_backend.hpp"

#include "json.hpp"

#include <semaphore>
#include <thread>

namespace mad {

namespace {

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // prefix, no trailing slash
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw BackendError(BackendError::Kind::Provider,
                           "endpoint must start with http:// or https://: " + endpoint);
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    ParsedEndpoint out;
    if (path_start == std::string::npos) {
        out.base = endpoint;
    } else {
        out.base = endpoint.substr(0, path_start);
        out.path = endpoint.substr(path_start);
    }
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

bool transient_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

struct OpenAiBackend::Impl {
    RemoteConfig config;
    ParsedEndpoint endpoint;
    std::counting_semaphore<4096> in_flight;

    explicit Impl(RemoteConfig cfg)
        : config(std::move(cfg)),
          endpoint(parse_endpoint(config.endpoint)),
          in_flight(std::max(1, config.max_in_flight)) {}

    std::unique_ptr<httplib::Client> make_client() const {
        auto client = std::make_unique<httplib::Client>(endpoint.base);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
        client->set_connection_timeout(secs.count(), 0);
        client->set_read_timeout(secs.count(), 0);
        client->set_write_timeout(secs.count(), 0);
        client->set_default_headers(
            {{"Authorization", "Bearer " + config.api_key}});
        return client;
    }

    std::string request_body(const ChatRequest& request) const {
        nlohmann::ordered_json body;
        body["model"] = request.params.model_id;
        body["temperature"] = request.params.temperature;
        if (request.params.max_output_tokens) {
            body["max_tokens"] = *request.params.max_output_tokens;
        }
        auto& messages = body["messages"] = nlohmann::ordered_json::array();
        if (!request.system_prompt.empty()) {
            messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
        }
        for (const auto& turn : request.turns) {
            messages.push_back({{"role", "user"}, {"content", turn.text}});
        }
        return body.dump();
    }

    ChatResponse parse_response(const std::string& body) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& ex) {
            throw BackendError(BackendError::Kind::Provider,
                               std::string("unparseable completion response: ") + ex.what());
        }
        ChatResponse response;
        try {
            response.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            const auto& usage = j.at("usage");
            response.usage.input_tokens = usage.at("prompt_tokens").get<std::int64_t>();
            response.usage.output_tokens = usage.at("completion_tokens").get<std::int64_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw BackendError(BackendError::Kind::Provider,
                               std::string("completion response missing field: ") + ex.what());
        }
        return response;
    }
};

OpenAiBackend::OpenAiBackend(RemoteConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

OpenAiBackend::~OpenAiBackend() = default;

std::string OpenAiBackend::descriptor() const {
    return "openai:" + impl_->config.params.model_id + "@" + impl_->config.endpoint;
}

ChatResponse OpenAiBackend::complete(const ChatRequest& request) {
    impl_->in_flight.acquire();
    struct Release {
        std::counting_semaphore<4096>* sem;
        ~Release() { sem->release(); }
    } release{&impl_->in_flight};

    ChatRequest effective = request;
    effective.params.model_id = impl_->config.params.model_id;
    effective.params.temperature = request.params.temperature;
    if (!effective.params.max_output_tokens) {
        effective.params.max_output_tokens = impl_->config.params.max_output_tokens;
    }
    const std::string body = impl_->request_body(effective);
    const std::string url = impl_->endpoint.path + "/chat/completions";
    const RetryPolicy& retry = impl_->config.retry;

    std::string last_error;
    bool last_transient_was_status = false;
    for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            auto delay = std::chrono::duration_cast<std::chrono::milliseconds>(
                retry.initial_backoff *
                std::pow(retry.backoff_multiplier, attempt - 2));
            std::this_thread::sleep_for(delay);
        }
        auto client = impl_->make_client();
        auto start = std::chrono::steady_clock::now();
        httplib::Result result = client->Post(url, body, "application/json");
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);

        if (!result) {
            last_error = "transport failure: " + httplib::to_string(result.error());
            last_transient_was_status = false;
            continue;  // connection errors and timeouts are retryable
        }
        if (result->status == 200) {
            ChatResponse response = impl_->parse_response(result->body);
            response.latency = elapsed;
            return response;
        }
        std::string detail = "HTTP " + std::to_string(result->status);
        if (!result->body.empty()) {
            detail += ": " + result->body.substr(0, 512);
        }
        if (transient_status(result->status)) {
            last_error = detail;
            last_transient_was_status = true;
            continue;
        }
        // Auth failures and other client errors are final.
        throw BackendError(BackendError::Kind::Provider, detail);
    }
    throw BackendError(last_transient_was_status ? BackendError::Kind::Provider
                                                 : BackendError::Kind::Transport,
                       "request failed after " + std::to_string(retry.max_attempts) +
                           " attempts; last error: " + last_error);
}

}  // namespace mad
