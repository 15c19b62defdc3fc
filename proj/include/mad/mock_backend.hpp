#pragma once

#include "mad/backend.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mad {

/// One scripted response. All present criteria must match (AND); a rule with
/// no criteria matches any request. Rules are tried in order, first match wins.
struct ScriptRule {
    std::optional<std::string> contains;       // substring of the whole request
    std::optional<std::string> last_contains;  // substring of the last turn
    std::optional<std::string> speaker;        // equals request tag speaker
    std::optional<int> round;                  // equals request tag round
    std::string response;
};

/// Deterministic offline stand-in for a chat backend. For a fixed script,
/// complete() is a pure function of the request: byte-identical requests get
/// byte-identical responses, from any number of threads. Token usage comes
/// from estimate_tokens on the request and response text.
class MockBackend : public Backend {
public:
    explicit MockBackend(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

    /// Loads a script file: {"rules": [{"match": {...}, "response": "..."}]}.
    /// Match keys: "contains", "last_contains", "speaker", "round".
    static MockBackend load(const std::filesystem::path& file);

    ChatResponse complete(const ChatRequest& request) override;
    std::string descriptor() const override { return "mock"; }

    /// ceil(byte count / 4); the mock's stand-in for provider tokenization.
    static std::int64_t estimate_tokens(std::string_view text);

private:
    std::vector<ScriptRule> rules_;
};

}  // namespace mad
