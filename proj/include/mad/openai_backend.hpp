#pragma once

#include "mad/backend.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace mad {

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double backoff_multiplier = 2.0;
};

struct RemoteConfig {
    std::string endpoint = "https://api.openai.com/v1";
    std::string api_key;
    ModelParams params;
    std::chrono::milliseconds timeout{120000};
    RetryPolicy retry;
    int max_in_flight = 4;
};

/// Chat-completions client for any OpenAI-compatible HTTP endpoint.
/// Retries timeouts, 5xx and rate limits with exponential backoff; never
/// retries auth or other client errors. Thread-safe; concurrent calls are
/// bounded by max_in_flight.
class OpenAiBackend : public Backend {
public:
    explicit OpenAiBackend(RemoteConfig config);
    ~OpenAiBackend() override;

    ChatResponse complete(const ChatRequest& request) override;
    std::string descriptor() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mad
