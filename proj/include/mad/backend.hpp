#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mad {

/// Exact token counts as reported by the backend. Always integers.
struct Usage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;

    std::int64_t total() const { return input_tokens + output_tokens; }
    Usage& operator+=(const Usage& other) {
        input_tokens += other.input_tokens;
        output_tokens += other.output_tokens;
        return *this;
    }
    friend Usage operator+(Usage a, const Usage& b) { return a += b; }
    bool operator==(const Usage& other) const {
        return input_tokens == other.input_tokens &&
               output_tokens == other.output_tokens;
    }
};

struct ModelParams {
    std::string model_id = "mock";
    double temperature = 0.0;
    std::optional<int> max_output_tokens;
};

struct Turn {
    std::string speaker;  // metadata; the text already carries any speaker tag
    std::string text;
};

/// Lets mock scripts key on who is asking and in which round.
struct RequestTag {
    std::string speaker;
    int round = -1;  // -1 = not part of a debate round
};

struct ChatRequest {
    std::string system_prompt;
    std::vector<Turn> turns;  // non-empty
    ModelParams params;
    RequestTag tag;
};

struct ChatResponse {
    std::string text;
    Usage usage;
    std::chrono::milliseconds latency{0};
};

class BackendError : public std::runtime_error {
public:
    enum class Kind {
        Transport,   // network failure / timeout after retries
        Provider,    // provider rejected the request (auth, rate limit, ...)
        ScriptMiss,  // mock had no rule matching the request
    };

    BackendError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class Backend {
public:
    virtual ~Backend() = default;

    /// Returns the completion with exact provider-reported usage.
    /// Throws BackendError once the retry policy is exhausted.
    virtual ChatResponse complete(const ChatRequest& request) = 0;

    virtual std::string descriptor() const = 0;
};

/// Prices per 1,000,000 tokens, plus a multiplier into the reporting
/// currency. All strictly positive.
struct PriceTable {
    double input_price_per_million = 0.0;
    double output_price_per_million = 0.0;
    double currency_rate = 1.0;
    std::string currency = "EUR";

    static PriceTable load(const std::filesystem::path& file);
};

/// cost = (in * p_in + out * p_out) / 1e6 * rate. Unrounded; linear in usage.
double estimate_cost(const Usage& usage, const PriceTable& prices);

/// Rounded half-up to 2 decimals, e.g. "7.20". Display only.
std::string format_cost(double amount);

}  // namespace mad
