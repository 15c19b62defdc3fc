#include "mad/mock_backend.hpp"

#include "json.hpp"

#include <fstream>

namespace mad {

namespace {

void expect_keys(const nlohmann::json& obj,
                 std::initializer_list<const char*> allowed,
                 const std::string& context) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw std::runtime_error("mock script: unknown key '" + item.key() +
                                     "' in " + context);
        }
    }
}

}  // namespace

MockBackend MockBackend::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open mock script: " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error("malformed mock script " + file.string() + ": " +
                                 ex.what());
    }
    expect_keys(j, {"rules"}, "script root");
    std::vector<ScriptRule> rules;
    for (const auto& rule_json : j.at("rules")) {
        expect_keys(rule_json, {"match", "response"}, "rule");
        ScriptRule rule;
        rule.response = rule_json.at("response").get<std::string>();
        if (rule_json.contains("match")) {
            const auto& m = rule_json.at("match");
            expect_keys(m, {"contains", "last_contains", "speaker", "round"}, "match");
            if (m.contains("contains")) rule.contains = m.at("contains").get<std::string>();
            if (m.contains("last_contains")) {
                rule.last_contains = m.at("last_contains").get<std::string>();
            }
            if (m.contains("speaker")) rule.speaker = m.at("speaker").get<std::string>();
            if (m.contains("round")) rule.round = m.at("round").get<int>();
        }
        rules.push_back(std::move(rule));
    }
    return MockBackend(std::move(rules));
}

std::int64_t MockBackend::estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
    std::string full_text = request.system_prompt;
    for (const auto& turn : request.turns) {
        full_text += '\n';
        full_text += turn.text;
    }
    const std::string& last_text =
        request.turns.empty() ? request.system_prompt : request.turns.back().text;

    for (const auto& rule : rules_) {
        if (rule.contains && full_text.find(*rule.contains) == std::string::npos) continue;
        if (rule.last_contains &&
            last_text.find(*rule.last_contains) == std::string::npos) {
            continue;
        }
        if (rule.speaker && *rule.speaker != request.tag.speaker) continue;
        if (rule.round && *rule.round != request.tag.round) continue;

        ChatResponse response;
        response.text = rule.response;
        response.usage.input_tokens = estimate_tokens(full_text);
        response.usage.output_tokens = estimate_tokens(response.text);
        response.latency = std::chrono::milliseconds(0);
        return response;
    }
    throw BackendError(BackendError::Kind::ScriptMiss,
                       "mock script has no rule matching a request from '" +
                           request.tag.speaker + "'");
}

}  // namespace mad
