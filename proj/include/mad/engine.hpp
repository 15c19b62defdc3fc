#pragma once

#include "mad/backend.hpp"
#include "mad/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace mad {

struct Message {
    std::int64_t seq = 0;  // strictly increasing within a transcript
    int round = 0;         // 0 = opening; judge/summarizer carry the round they conclude
    std::string sender;
    Role role = Role::Debater;
    std::vector<std::string> recipients;
    std::string content;
    Usage usage;
};

struct Transcript {
    std::string debate_id;
    std::vector<Message> messages;
    std::string config_fingerprint;

    Usage total_usage() const {
        Usage total;
        for (const auto& m : messages) total += m.usage;
        return total;
    }
};

// JSON-Lines persistence: one Message object per line.
void write_transcript_jsonl(std::ostream& out, const Transcript& transcript);
std::vector<Message> read_transcript_jsonl(std::istream& in);

/// A label or, for numeric tasks, a value.
using Answer = std::variant<std::string, double>;

std::string answer_text(const Answer& answer);

struct Vote {
    std::string voter;
    Answer choice;
    std::optional<double> confidence;  // present iff format is WithConfidence
};

enum class AgreementPath {
    VoteResolved,
    TieEscalatedToJudge,
    JudgeResolved,
    AveragingResolved,
};

std::string agreement_path_name(AgreementPath path);

enum class Flag { ParseRetry, ParseFailure, TieBroken };

std::string flag_name(Flag flag);
std::optional<Flag> parse_flag(std::string_view name);

struct DebateOutcome {
    Answer decision;
    Transcript transcript;
    Usage total_usage;
    AgreementPath agreement_path = AgreementPath::VoteResolved;
    std::set<Flag> flags;
};

/// Thrown when a backend failure kills a debate; carries what was recorded
/// up to that point.
class DebateAborted : public std::runtime_error {
public:
    DebateAborted(const std::string& reason, Transcript partial)
        : std::runtime_error(reason), partial_(std::move(partial)) {}

    const Transcript& partial() const { return partial_; }

private:
    Transcript partial_;
};

struct EngineOptions {
    ModelParams params;
    bool parallel_phases = true;  // run simultaneous-phase calls concurrently
    std::string debate_id;
};

/// Runs the full debate for one task item: opening round, n rebuttal rounds,
/// agreement resolution. Deterministic for a deterministic backend: message
/// order and seq are fixed by (round, phase, declaration order), never by
/// call completion order.
DebateOutcome run_debate(const DebateConfig& config, const std::string& item_input,
                         Backend& backend, const EngineOptions& options = {});

/// Assembles the chat request for a scheduled speaker (or the judge).
/// Round 0 debater context is the task prompt alone; later rounds add each
/// in-neighbor's latest message per the exchange format. The judge sees the
/// task prompt plus the entire transcript in seq order.
ChatRequest build_context(const Participant& participant, const Transcript& transcript,
                          const DebateConfig& config, int round,
                          const std::string& item_input,
                          const ModelParams& params = {});

struct AgreementResult {
    Answer decision;
    AgreementPath path = AgreementPath::VoteResolved;
    std::set<Flag> flags;
};

/// Applies the agreement rule to extracted votes. Judge-based rules append
/// the judge's message(s) to the transcript. Ties without a judge break
/// deterministically to the earliest declared label and are flagged.
AgreementResult resolve_agreement(AgreementRule rule, const std::vector<Vote>& votes,
                                  Transcript& transcript, const DebateConfig& config,
                                  Backend& backend, const std::string& item_input,
                                  const ModelParams& params = {});

/// One backend call over the concatenated messages; output truncated to
/// max_words. An empty message list yields an empty digest with no call.
std::string summarize(const Participant& summarizer, const std::vector<Message>& messages,
                      int max_words, Backend& backend, Usage& usage_out,
                      const ModelParams& params = {});

// Label and number extraction used by the engine and the classification
// pipeline. Labels are matched case-insensitively with word boundaries;
// longer labels are tried first so that e.g. "NF" is never read as "F".

/// Last marker occurrence followed by a declared label.
std::optional<std::string> parse_marker_label(const std::string& text,
                                              std::string_view marker,
                                              const std::vector<std::string>& labels);

/// Last marker occurrence followed by a number.
std::optional<double> parse_marker_number(const std::string& text,
                                          std::string_view marker);

/// "CLASSIFICATION:" marker first, then a standalone-token fallback scan.
std::optional<std::string> parse_decision_label(const std::string& text,
                                                const std::vector<std::string>& labels);

/// Reads "ANSWER: <label|number>" (and "CONFIDENCE: <0..1>" when required)
/// from a debater message.
std::optional<Vote> parse_vote(const std::string& voter, const std::string& content,
                               const TaskSpec& task, bool require_confidence);

}  // namespace mad
