#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mad {

enum class Role { Debater, Judge, Summarizer, Leader, Verifier, Editor };

std::string role_name(Role role);
std::optional<Role> parse_role(std::string_view name);

struct Stance {
    enum class Kind { Neutral, ArgueFor, ArgueAgainst, Critic };
    Kind kind = Kind::Neutral;
    std::string label;  // ArgueFor / ArgueAgainst only

    static Stance neutral() { return {}; }
    static Stance argue_for(std::string l) { return {Kind::ArgueFor, std::move(l)}; }
    static Stance argue_against(std::string l) { return {Kind::ArgueAgainst, std::move(l)}; }
    static Stance critic() { return {Kind::Critic, {}}; }

    /// Human-readable form, used when a system prompt references {stance}.
    std::string describe() const;
};

struct Persona {
    std::string background;
    Stance stance;
    std::vector<std::string> traits;
};

struct Participant {
    std::string name;
    Role role = Role::Debater;
    Persona persona;
    std::string system_prompt;
};

struct Topology {
    enum class Variant { Bilateral, FullyConnected, Grouped, Structured };
    Variant variant = Variant::FullyConnected;
    std::vector<std::vector<std::string>> groups;                   // Grouped
    std::vector<std::pair<std::string, std::string>> edges;         // Structured

    static Topology bilateral() { return {Variant::Bilateral, {}, {}}; }
    static Topology fully_connected() { return {Variant::FullyConnected, {}, {}}; }
    static Topology grouped(std::vector<std::vector<std::string>> g) {
        return {Variant::Grouped, std::move(g), {}};
    }
    static Topology structured(std::vector<std::pair<std::string, std::string>> e) {
        return {Variant::Structured, {}, std::move(e)};
    }
};

struct Protocol {
    enum class Variant { Simultaneous, Sequential, Hybrid };
    Variant variant = Variant::Simultaneous;
    std::vector<std::string> order;  // Sequential only

    static Protocol simultaneous() { return {Variant::Simultaneous, {}}; }
    static Protocol sequential(std::vector<std::string> o) {
        return {Variant::Sequential, std::move(o)};
    }
    // Hybrid: round 0 simultaneous, later rounds sequential in the order
    // debaters are declared in the config.
    static Protocol hybrid() { return {Variant::Hybrid, {}}; }
};

struct ExchangeFormat {
    enum class Variant { Verbatim, Summarized, WithConfidence };
    Variant variant = Variant::Verbatim;
    int max_words = 0;  // Summarized only

    static ExchangeFormat verbatim() { return {Variant::Verbatim, 0}; }
    static ExchangeFormat summarized(int max_words) {
        return {Variant::Summarized, max_words};
    }
    static ExchangeFormat with_confidence() { return {Variant::WithConfidence, 0}; }
};

enum class AgreementRule {
    MajorityVote,
    WeightedVote,
    Average,
    JudgeDecision,
    JudgeOnTie,
};

struct TaskSpec {
    std::vector<std::string> labels;  // empty iff numeric
    bool numeric = false;
    std::string prompt_template;      // must contain "{input}"
    std::string fallback_label;       // empty = first declared label

    std::string effective_fallback() const {
        if (!fallback_label.empty()) return fallback_label;
        return labels.empty() ? std::string() : labels.front();
    }
};

struct DebateConfig {
    std::vector<Participant> participants;
    Topology topology;
    Protocol protocol;
    ExchangeFormat format;
    AgreementRule agreement = AgreementRule::JudgeDecision;
    int rounds = 0;  // rebuttal iterations after the opening round
    TaskSpec task;

    std::vector<const Participant*> debaters() const;
    const Participant* find(std::string_view name) const;
    const Participant* judge() const;       // first Judge, if any
    const Participant* summarizer() const;  // first Summarizer, if any
};

/// One violated invariant. `code` is stable and machine-readable.
struct Violation {
    std::string code;
    std::string message;

    bool operator==(const Violation& other) const {
        return code == other.code && message == other.message;
    }
};

// Stable violation codes.
namespace violation {
inline constexpr const char* AtLeastTwoDebaters = "AtLeastTwoDebaters";
inline constexpr const char* NameEmpty = "NameEmpty";
inline constexpr const char* DuplicateName = "DuplicateName";
inline constexpr const char* RoleNotExecutable = "RoleNotExecutable";
inline constexpr const char* StanceLabelUnknown = "StanceLabelUnknown";
inline constexpr const char* BilateralRequiresTwoDebaters = "BilateralRequiresTwoDebaters";
inline constexpr const char* GroupEmpty = "GroupEmpty";
inline constexpr const char* GroupsNotDisjoint = "GroupsNotDisjoint";
inline constexpr const char* GroupMemberUnknown = "GroupMemberUnknown";
inline constexpr const char* GroupsIncomplete = "GroupsIncomplete";
inline constexpr const char* EdgeEndpointUnknown = "EdgeEndpointUnknown";
inline constexpr const char* SelfEdge = "SelfEdge";
inline constexpr const char* SequentialOrderNotPermutation = "SequentialOrderNotPermutation";
inline constexpr const char* SummarizedRequiresSummarizer = "SummarizedRequiresSummarizer";
inline constexpr const char* SummarizedMaxWordsInvalid = "SummarizedMaxWordsInvalid";
inline constexpr const char* AgreementRequiresJudge = "AgreementRequiresJudge";
inline constexpr const char* MultipleJudges = "MultipleJudges";
inline constexpr const char* WeightedVoteRequiresConfidence = "WeightedVoteRequiresConfidence";
inline constexpr const char* AverageRequiresNumericTask = "AverageRequiresNumericTask";
inline constexpr const char* TaskLabelsInvalid = "TaskLabelsInvalid";
inline constexpr const char* DuplicateTaskLabel = "DuplicateTaskLabel";
inline constexpr const char* FallbackLabelUnknown = "FallbackLabelUnknown";
inline constexpr const char* TaskTemplateMissingPlaceholder = "TaskTemplateMissingPlaceholder";
inline constexpr const char* RoundsNegative = "RoundsNegative";
}  // namespace violation

/// Checks every invariant and returns all violations (never fails fast).
/// Pure: equal configs yield equal violation lists.
std::vector<Violation> validate_config(const DebateConfig& config);

/// Debaters that receive `sender`'s messages (never includes the sender).
/// Result is ordered by declaration order; round-independent.
/// Throws std::invalid_argument for an unknown or non-debater sender or a
/// negative round.
std::vector<std::string> recipients(const DebateConfig& config,
                                    std::string_view sender, int round);

/// Phases of one round; each phase is the set of debaters speaking
/// concurrently (declaration order within a phase).
/// Throws std::out_of_range unless 0 <= round <= config.rounds.
std::vector<std::vector<std::string>> speaking_schedule(const DebateConfig& config,
                                                        int round);

/// Stable hash of the full config; equal configs fingerprint equally
/// regardless of how they were constructed.
std::string config_fingerprint(const DebateConfig& config);

}  // namespace mad
