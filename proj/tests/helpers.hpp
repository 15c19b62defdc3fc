// Shared builders and backend test doubles.
#pragma once

#include "mad/engine.hpp"
#include "mad/mock_backend.hpp"
#include "mad/model.hpp"

#include <chrono>
#include <mutex>
#include <thread>
#include <vector>

namespace mad::test {

inline TaskSpec fnf_task() {
    TaskSpec task;
    task.labels = {"F", "NF"};
    task.prompt_template = "Requirement: {input}";
    return task;
}

inline Participant debater(std::string name, std::string prompt = "You are a debater.") {
    Participant p;
    p.name = std::move(name);
    p.role = Role::Debater;
    p.system_prompt = std::move(prompt);
    return p;
}

inline Participant judge(std::string name = "judge") {
    Participant p;
    p.name = std::move(name);
    p.role = Role::Judge;
    p.system_prompt = "You are a moderator.";
    return p;
}

inline Participant summarizer(std::string name = "summarizer") {
    Participant p;
    p.name = std::move(name);
    p.role = Role::Summarizer;
    p.system_prompt = "You summarize debates.";
    return p;
}

/// The reference setup: two debaters, one judge, bilateral, simultaneous,
/// verbatim, judge decision.
inline DebateConfig bilateral_config(int rounds) {
    DebateConfig config;
    config.participants = {debater("functional"), debater("non_functional"), judge()};
    config.topology = Topology::bilateral();
    config.protocol = Protocol::simultaneous();
    config.format = ExchangeFormat::verbatim();
    config.agreement = AgreementRule::JudgeDecision;
    config.rounds = rounds;
    config.task = fnf_task();
    return config;
}

inline DebateConfig voting_config(int debaters_count, int rounds,
                                  AgreementRule rule = AgreementRule::MajorityVote) {
    DebateConfig config;
    for (int i = 0; i < debaters_count; ++i) {
        config.participants.push_back(debater("d" + std::to_string(i)));
    }
    if (rule == AgreementRule::JudgeDecision || rule == AgreementRule::JudgeOnTie) {
        config.participants.push_back(judge());
    }
    config.topology = Topology::fully_connected();
    config.protocol = Protocol::simultaneous();
    config.format = ExchangeFormat::verbatim();
    config.agreement = rule;
    config.rounds = rounds;
    config.task = fnf_task();
    return config;
}

/// Remembers every request it forwarded.
class RecordingBackend : public Backend {
public:
    explicit RecordingBackend(Backend& inner) : inner_(inner) {}

    ChatResponse complete(const ChatRequest& request) override {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            requests_.push_back(request);
        }
        return inner_.complete(request);
    }
    std::string descriptor() const override { return inner_.descriptor(); }

    std::vector<ChatRequest> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

private:
    Backend& inner_;
    mutable std::mutex mutex_;
    mutable std::vector<ChatRequest> requests_;
};

/// Delays calls by a per-call decreasing amount so that concurrent phases
/// complete in reverse submission order.
class ReverseOrderBackend : public Backend {
public:
    explicit ReverseOrderBackend(Backend& inner) : inner_(inner) {}

    ChatResponse complete(const ChatRequest& request) override {
        int ticket = counter_.fetch_add(1);
        int delay_ms = 20 - 4 * (ticket % 5);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        return inner_.complete(request);
    }
    std::string descriptor() const override { return inner_.descriptor(); }

private:
    Backend& inner_;
    std::atomic<int> counter_{0};
};

/// Fails every call with the given kind.
class FailingBackend : public Backend {
public:
    explicit FailingBackend(BackendError::Kind kind = BackendError::Kind::Transport)
        : kind_(kind) {}

    ChatResponse complete(const ChatRequest&) override {
        throw BackendError(kind_, "injected failure");
    }
    std::string descriptor() const override { return "failing"; }

private:
    BackendError::Kind kind_;
};

}  // namespace mad::test
