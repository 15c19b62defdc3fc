#include "mad/engine.hpp"

#include "mad/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace mad {

namespace {

// Cross-group digests fall back to plain truncation when no summarizer runs.
constexpr int kGroupDigestMaxWords = 200;

bool vote_family(AgreementRule rule) {
    return rule == AgreementRule::MajorityVote || rule == AgreementRule::WeightedVote ||
           rule == AgreementRule::Average || rule == AgreementRule::JudgeOnTie;
}

std::string render_system_prompt(const Participant& p) {
    std::string out = p.system_prompt;
    out = util::replace_all(out, "{background}", p.persona.background);
    out = util::replace_all(out, "{stance}", p.persona.stance.describe());
    std::string traits;
    for (std::size_t i = 0; i < p.persona.traits.size(); ++i) {
        if (i) traits += ", ";
        traits += p.persona.traits[i];
    }
    out = util::replace_all(out, "{traits}", traits);
    return out;
}

std::string render_task_prompt(const TaskSpec& task, const std::string& item_input) {
    return util::replace_all(task.prompt_template, "{input}", item_input);
}

std::string role_tag_word(Role role) {
    switch (role) {
        case Role::Debater: return "Debater";
        case Role::Judge: return "Judge";
        case Role::Summarizer: return "Summarizer";
        case Role::Leader: return "Leader";
        case Role::Verifier: return "Verifier";
        case Role::Editor: return "Editor";
    }
    return "Participant";
}

std::string tag_line(const Message& m) {
    return role_tag_word(m.role) + " " + m.sender + ", round " +
           std::to_string(m.round) + ":";
}

std::string answer_options(const TaskSpec& task) {
    if (task.numeric) return "number";
    std::string out;
    for (std::size_t i = 0; i < task.labels.size(); ++i) {
        if (i) out += '|';
        out += task.labels[i];
    }
    return out;
}

std::string confidence_instruction() {
    return "End your reply with a line CONFIDENCE: <0.00-1.00>.";
}

std::string vote_instruction(const TaskSpec& task) {
    return "This is the final round. End your reply with a line ANSWER: <" +
           answer_options(task) + ">.";
}

std::string vote_clarification(const TaskSpec& task) {
    return "Your previous reply could not be parsed. Reply again and end with a "
           "line ANSWER: <" +
           answer_options(task) + ">.";
}

std::string judge_instruction(const TaskSpec& task) {
    return "The debate has ended. Decide the final classification. End your reply "
           "with CLASSIFICATION: <" +
           answer_options(task) + ">.";
}

std::string judge_clarification(const TaskSpec& task) {
    return "Your previous reply could not be parsed. Reply again and end with "
           "CLASSIFICATION: <" +
           answer_options(task) + ">.";
}

std::vector<const Participant*> in_neighbors(const DebateConfig& config,
                                             const std::string& name, int round) {
    std::vector<const Participant*> out;
    for (const auto* d : config.debaters()) {
        if (d->name == name) continue;
        auto targets = recipients(config, d->name, round);
        if (std::find(targets.begin(), targets.end(), name) != targets.end()) {
            out.push_back(d);
        }
    }
    return out;
}

/// Groups in declared order; a single all-debater group for ungrouped
/// topologies.
std::vector<std::vector<std::string>> group_partition(const DebateConfig& config) {
    if (config.topology.variant == Topology::Variant::Grouped) {
        return config.topology.groups;
    }
    std::vector<std::string> all;
    for (const auto* d : config.debaters()) all.push_back(d->name);
    return {all};
}

const Message* latest_message_from(const Transcript& transcript, const std::string& sender,
                                   std::optional<int> round = std::nullopt) {
    for (auto it = transcript.messages.rbegin(); it != transcript.messages.rend(); ++it) {
        if (it->sender == sender && (!round || it->round == *round)) return &*it;
    }
    return nullptr;
}

void append_message(Transcript& transcript, Message m) {
    m.seq = static_cast<std::int64_t>(transcript.messages.size());
    transcript.messages.push_back(std::move(m));
}

std::vector<std::string> labels_longest_first(const std::vector<std::string>& labels) {
    std::vector<std::string> order = labels;
    std::stable_sort(order.begin(), order.end(),
                     [](const std::string& a, const std::string& b) {
                         return a.size() > b.size();
                     });
    return order;
}

Answer fallback_answer(const TaskSpec& task) {
    if (task.numeric) return 0.0;
    return task.effective_fallback();
}

}  // namespace

void write_transcript_jsonl(std::ostream& out, const Transcript& transcript) {
    for (const auto& m : transcript.messages) {
        nlohmann::ordered_json j;
        j["seq"] = m.seq;
        j["round"] = m.round;
        j["sender"] = m.sender;
        j["role"] = role_name(m.role);
        j["recipients"] = m.recipients;
        j["content"] = m.content;
        j["usage"] = {{"input_tokens", m.usage.input_tokens},
                      {"output_tokens", m.usage.output_tokens}};
        out << j.dump() << '\n';
    }
}

std::vector<Message> read_transcript_jsonl(std::istream& in) {
    std::vector<Message> messages;
    std::string line;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Message m;
        m.seq = j.at("seq").get<std::int64_t>();
        m.round = j.at("round").get<int>();
        m.sender = j.at("sender").get<std::string>();
        auto role = parse_role(j.at("role").get<std::string>());
        if (!role) throw std::runtime_error("transcript: unknown role in line: " + line);
        m.role = *role;
        m.recipients = j.at("recipients").get<std::vector<std::string>>();
        m.content = j.at("content").get<std::string>();
        m.usage.input_tokens = j.at("usage").at("input_tokens").get<std::int64_t>();
        m.usage.output_tokens = j.at("usage").at("output_tokens").get<std::int64_t>();
        messages.push_back(std::move(m));
    }
    return messages;
}

std::string answer_text(const Answer& answer) {
    if (std::holds_alternative<std::string>(answer)) return std::get<std::string>(answer);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", std::get<double>(answer));
    return buf;
}

std::string agreement_path_name(AgreementPath path) {
    switch (path) {
        case AgreementPath::VoteResolved: return "VoteResolved";
        case AgreementPath::TieEscalatedToJudge: return "TieEscalatedToJudge";
        case AgreementPath::JudgeResolved: return "JudgeResolved";
        case AgreementPath::AveragingResolved: return "AveragingResolved";
    }
    return "unknown";
}

std::string flag_name(Flag flag) {
    switch (flag) {
        case Flag::ParseRetry: return "ParseRetry";
        case Flag::ParseFailure: return "ParseFailure";
        case Flag::TieBroken: return "TieBroken";
    }
    return "unknown";
}

std::optional<Flag> parse_flag(std::string_view name) {
    for (Flag f : {Flag::ParseRetry, Flag::ParseFailure, Flag::TieBroken}) {
        if (name == flag_name(f)) return f;
    }
    return std::nullopt;
}

std::optional<std::string> parse_marker_label(const std::string& text,
                                              std::string_view marker,
                                              const std::vector<std::string>& labels) {
    const std::string ltext = util::to_lower(text);
    const std::string lmark = util::to_lower(marker);
    if (lmark.empty()) return std::nullopt;
    const auto order = labels_longest_first(labels);

    std::vector<std::size_t> occurrences;
    for (std::size_t p = ltext.find(lmark); p != std::string::npos;
         p = ltext.find(lmark, p + 1)) {
        occurrences.push_back(p);
    }
    for (auto it = occurrences.rbegin(); it != occurrences.rend(); ++it) {
        std::size_t after = *it + lmark.size();
        while (after < ltext.size() &&
               std::isspace(static_cast<unsigned char>(ltext[after]))) {
            ++after;
        }
        for (const auto& label : order) {
            const std::string llabel = util::to_lower(label);
            if (ltext.compare(after, llabel.size(), llabel) != 0) continue;
            std::size_t end = after + llabel.size();
            if (end == ltext.size() || !util::is_word_char(ltext[end])) return label;
        }
    }
    return std::nullopt;
}

std::optional<double> parse_marker_number(const std::string& text,
                                          std::string_view marker) {
    const std::string ltext = util::to_lower(text);
    const std::string lmark = util::to_lower(marker);
    if (lmark.empty()) return std::nullopt;

    std::vector<std::size_t> occurrences;
    for (std::size_t p = ltext.find(lmark); p != std::string::npos;
         p = ltext.find(lmark, p + 1)) {
        occurrences.push_back(p);
    }
    for (auto it = occurrences.rbegin(); it != occurrences.rend(); ++it) {
        std::size_t after = *it + lmark.size();
        while (after < text.size() &&
               std::isspace(static_cast<unsigned char>(text[after]))) {
            ++after;
        }
        const char* start = text.c_str() + after;
        char* end = nullptr;
        double value = std::strtod(start, &end);
        if (end != start && std::isfinite(value)) return value;
    }
    return std::nullopt;
}

std::optional<std::string> parse_decision_label(const std::string& text,
                                                const std::vector<std::string>& labels) {
    if (auto label = parse_marker_label(text, "classification:", labels)) return label;
    for (const auto& label : labels_longest_first(labels)) {
        if (util::rfind_word_token(text, label)) return label;
    }
    return std::nullopt;
}

std::optional<Vote> parse_vote(const std::string& voter, const std::string& content,
                               const TaskSpec& task, bool require_confidence) {
    Vote vote;
    vote.voter = voter;
    if (task.numeric) {
        auto value = parse_marker_number(content, "answer:");
        if (!value) return std::nullopt;
        vote.choice = *value;
    } else {
        auto label = parse_marker_label(content, "answer:", task.labels);
        if (!label) return std::nullopt;
        vote.choice = *label;
    }
    if (require_confidence) {
        auto confidence = parse_marker_number(content, "confidence:");
        if (!confidence || *confidence < 0.0 || *confidence > 1.0) return std::nullopt;
        vote.confidence = *confidence;
    }
    return vote;
}

ChatRequest build_context(const Participant& participant, const Transcript& transcript,
                          const DebateConfig& config, int round,
                          const std::string& item_input, const ModelParams& params) {
    ChatRequest request;
    request.system_prompt = render_system_prompt(participant);
    request.params = params;
    request.tag = {participant.name, round};
    request.turns.push_back({"task", render_task_prompt(config.task, item_input)});

    if (participant.role == Role::Judge) {
        for (const auto& m : transcript.messages) {
            request.turns.push_back({m.sender, tag_line(m) + "\n" + m.content});
        }
        request.turns.push_back({"instruction", judge_instruction(config.task)});
        return request;
    }

    if (round >= 1) {
        if (config.format.variant == ExchangeFormat::Variant::Summarized) {
            for (const auto& m : transcript.messages) {
                if (m.role == Role::Summarizer && m.round == round - 1) {
                    request.turns.push_back({m.sender, tag_line(m) + "\n" + m.content});
                }
            }
        } else {
            for (const auto* q : in_neighbors(config, participant.name, round)) {
                if (const Message* m = latest_message_from(transcript, q->name)) {
                    request.turns.push_back({m->sender, tag_line(*m) + "\n" + m->content});
                }
            }
            if (config.topology.variant == Topology::Variant::Grouped) {
                // Reduced inter-group exchange: truncated per-group digests of
                // the previous round.
                const auto groups = group_partition(config);
                const std::vector<std::string>* own = nullptr;
                for (const auto& g : groups) {
                    if (std::find(g.begin(), g.end(), participant.name) != g.end()) {
                        own = &g;
                        break;
                    }
                }
                for (const auto& g : groups) {
                    if (&g == own) continue;
                    std::string combined;
                    for (const auto& member : g) {
                        if (const Message* m =
                                latest_message_from(transcript, member, round - 1)) {
                            if (!combined.empty()) combined += "\n\n";
                            combined += tag_line(*m) + "\n" + m->content;
                        }
                    }
                    if (combined.empty()) continue;
                    std::string members;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (i) members += ", ";
                        members += g[i];
                    }
                    request.turns.push_back(
                        {"group", "Summary of group {" + members + "}, round " +
                                      std::to_string(round - 1) + ":\n" +
                                      util::truncate_words(combined, kGroupDigestMaxWords)});
                }
            }
        }
    }

    if (config.format.variant == ExchangeFormat::Variant::WithConfidence) {
        request.turns.push_back({"instruction", confidence_instruction()});
    }
    if (vote_family(config.agreement) && round == config.rounds) {
        request.turns.push_back({"instruction", vote_instruction(config.task)});
    }
    return request;
}

std::string summarize(const Participant& summarizer, const std::vector<Message>& messages,
                      int max_words, Backend& backend, Usage& usage_out,
                      const ModelParams& params) {
    usage_out = {};
    if (messages.empty()) return "";

    ChatRequest request;
    request.system_prompt = render_system_prompt(summarizer);
    request.params = params;
    request.tag = {summarizer.name, messages.back().round};
    std::string text = "Summarize the following debate messages in at most " +
                       std::to_string(max_words) + " words.";
    for (const auto& m : messages) {
        text += "\n\n" + tag_line(m) + "\n" + m.content;
    }
    request.turns.push_back({"messages", text});

    ChatResponse response = backend.complete(request);
    usage_out = response.usage;
    return util::truncate_words(response.text, max_words);
}

namespace {

/// Modal choice with deterministic tie handling. `tie` reports whether the
/// maximum was shared; the returned answer is then the earliest declared
/// label (or the smallest numeric value) among the tied ones.
std::pair<Answer, bool> modal_choice(const std::vector<Vote>& votes,
                                     const TaskSpec& task) {
    if (task.numeric) {
        std::map<double, int> counts;
        for (const auto& v : votes) counts[std::get<double>(v.choice)] += 1;
        int best = 0;
        for (const auto& [value, count] : counts) best = std::max(best, count);
        std::vector<double> tied;
        for (const auto& [value, count] : counts) {
            if (count == best) tied.push_back(value);
        }
        return {tied.front(), tied.size() > 1};  // std::map keeps values sorted
    }
    std::map<std::string, int> counts;
    for (const auto& v : votes) counts[std::get<std::string>(v.choice)] += 1;
    int best = 0;
    for (const auto& [label, count] : counts) best = std::max(best, count);
    int tied = 0;
    std::string winner;
    for (const auto& label : task.labels) {  // declared order
        auto it = counts.find(label);
        if (it != counts.end() && it->second == best) {
            if (winner.empty()) winner = label;
            ++tied;
        }
    }
    return {winner, tied > 1};
}

std::pair<Answer, bool> weighted_choice(const std::vector<Vote>& votes,
                                        const TaskSpec& task) {
    if (task.numeric) {
        std::map<double, double> weights;
        for (const auto& v : votes) {
            weights[std::get<double>(v.choice)] += v.confidence.value_or(0.0);
        }
        double best = 0.0;
        for (const auto& [value, weight] : weights) best = std::max(best, weight);
        std::vector<double> tied;
        for (const auto& [value, weight] : weights) {
            if (weight == best) tied.push_back(value);
        }
        return {tied.front(), tied.size() > 1};
    }
    std::map<std::string, double> weights;
    for (const auto& v : votes) {
        weights[std::get<std::string>(v.choice)] += v.confidence.value_or(0.0);
    }
    double best = 0.0;
    for (const auto& [label, weight] : weights) best = std::max(best, weight);
    int tied = 0;
    std::string winner;
    for (const auto& label : task.labels) {
        auto it = weights.find(label);
        if (it != weights.end() && it->second == best) {
            if (winner.empty()) winner = label;
            ++tied;
        }
    }
    return {winner, tied > 1};
}

AgreementResult judge_resolve(Transcript& transcript, const DebateConfig& config,
                              Backend& backend, const std::string& item_input,
                              const ModelParams& params) {
    const Participant* judge = config.judge();
    if (judge == nullptr) {
        throw std::logic_error("judge_resolve: config has no judge");
    }
    AgreementResult result;
    result.path = AgreementPath::JudgeResolved;

    ChatRequest request =
        build_context(*judge, transcript, config, config.rounds, item_input, params);
    ChatResponse response = backend.complete(request);
    append_message(transcript, Message{0, config.rounds, judge->name, Role::Judge,
                                       {}, response.text, response.usage});

    auto parse = [&](const std::string& text) -> std::optional<Answer> {
        if (config.task.numeric) {
            auto value = parse_marker_number(text, "classification:");
            if (!value) return std::nullopt;
            return Answer(*value);
        }
        auto label = parse_decision_label(text, config.task.labels);
        if (!label) return std::nullopt;
        return Answer(*label);
    };

    if (auto decision = parse(response.text)) {
        result.decision = *decision;
        return result;
    }

    result.flags.insert(Flag::ParseRetry);
    ChatRequest retry = request;
    retry.turns.push_back({judge->name, "Your previous reply:\n" + response.text});
    retry.turns.push_back({"instruction", judge_clarification(config.task)});
    ChatResponse second = backend.complete(retry);
    append_message(transcript, Message{0, config.rounds, judge->name, Role::Judge,
                                       {}, second.text, second.usage});
    if (auto decision = parse(second.text)) {
        result.decision = *decision;
        return result;
    }
    result.flags.insert(Flag::ParseFailure);
    result.decision = fallback_answer(config.task);
    return result;
}

}  // namespace

AgreementResult resolve_agreement(AgreementRule rule, const std::vector<Vote>& votes,
                                  Transcript& transcript, const DebateConfig& config,
                                  Backend& backend, const std::string& item_input,
                                  const ModelParams& params) {
    AgreementResult result;
    switch (rule) {
        case AgreementRule::JudgeDecision:
            return judge_resolve(transcript, config, backend, item_input, params);

        case AgreementRule::MajorityVote:
        case AgreementRule::WeightedVote: {
            result.path = AgreementPath::VoteResolved;
            if (votes.empty()) {
                result.decision = fallback_answer(config.task);
                result.flags.insert(Flag::ParseFailure);
                return result;
            }
            auto [answer, tie] = rule == AgreementRule::MajorityVote
                                     ? modal_choice(votes, config.task)
                                     : weighted_choice(votes, config.task);
            result.decision = answer;
            if (tie) result.flags.insert(Flag::TieBroken);
            return result;
        }

        case AgreementRule::Average: {
            result.path = AgreementPath::AveragingResolved;
            if (votes.empty()) {
                result.decision = fallback_answer(config.task);
                result.flags.insert(Flag::ParseFailure);
                return result;
            }
            double sum = 0.0;
            for (const auto& v : votes) sum += std::get<double>(v.choice);
            result.decision = sum / static_cast<double>(votes.size());
            return result;
        }

        case AgreementRule::JudgeOnTie: {
            if (!votes.empty()) {
                auto [answer, tie] = modal_choice(votes, config.task);
                if (!tie) {
                    result.decision = answer;
                    result.path = AgreementPath::VoteResolved;
                    return result;
                }
            }
            AgreementResult escalated =
                judge_resolve(transcript, config, backend, item_input, params);
            escalated.path = AgreementPath::TieEscalatedToJudge;
            return escalated;
        }
    }
    throw std::logic_error("resolve_agreement: unhandled rule");
}

namespace {

std::vector<Vote> extract_votes(Transcript& transcript, const DebateConfig& config,
                                Backend& backend, const std::string& item_input,
                                const ModelParams& params, std::set<Flag>& flags) {
    const bool with_confidence =
        config.format.variant == ExchangeFormat::Variant::WithConfidence;
    std::vector<Vote> votes;
    for (const auto* d : config.debaters()) {
        const Message* m = latest_message_from(transcript, d->name, config.rounds);
        if (m == nullptr) continue;
        auto vote = parse_vote(d->name, m->content, config.task, with_confidence);
        if (!vote) {
            flags.insert(Flag::ParseRetry);
            ChatRequest retry = build_context(*d, transcript, config, config.rounds,
                                              item_input, params);
            retry.turns.push_back({d->name, "Your previous reply:\n" + m->content});
            retry.turns.push_back({"instruction", vote_clarification(config.task)});
            ChatResponse response = backend.complete(retry);
            append_message(transcript,
                           Message{0, config.rounds, d->name, Role::Debater,
                                   recipients(config, d->name, config.rounds),
                                   response.text, response.usage});
            vote = parse_vote(d->name, response.text, config.task, with_confidence);
            if (!vote) {
                flags.insert(Flag::ParseFailure);
                continue;
            }
        }
        votes.push_back(std::move(*vote));
    }
    return votes;
}

}  // namespace

DebateOutcome run_debate(const DebateConfig& config, const std::string& item_input,
                         Backend& backend, const EngineOptions& options) {
    if (auto violations = validate_config(config); !violations.empty()) {
        std::string codes;
        for (const auto& v : violations) {
            if (!codes.empty()) codes += ", ";
            codes += v.code;
        }
        throw std::invalid_argument("run_debate: invalid config: " + codes);
    }

    Transcript transcript;
    transcript.debate_id = options.debate_id;
    transcript.config_fingerprint = config_fingerprint(config);
    std::set<Flag> flags;

    try {
        for (int round = 0; round <= config.rounds; ++round) {
            for (const auto& phase : speaking_schedule(config, round)) {
                // Contexts come from the transcript as it stood when the phase
                // began, so completion order within the phase cannot matter.
                std::vector<const Participant*> speakers;
                std::vector<ChatRequest> requests;
                for (const auto& name : phase) {
                    const Participant* p = config.find(name);
                    speakers.push_back(p);
                    requests.push_back(
                        build_context(*p, transcript, config, round, item_input,
                                      options.params));
                }
                std::vector<std::optional<ChatResponse>> responses(phase.size());
                std::vector<std::exception_ptr> errors(phase.size());
                if (options.parallel_phases && phase.size() > 1) {
                    std::vector<std::thread> threads;
                    threads.reserve(phase.size());
                    for (std::size_t i = 0; i < phase.size(); ++i) {
                        threads.emplace_back([&, i] {
                            try {
                                responses[i] = backend.complete(requests[i]);
                            } catch (...) {
                                errors[i] = std::current_exception();
                            }
                        });
                    }
                    for (auto& t : threads) t.join();
                } else {
                    for (std::size_t i = 0; i < phase.size(); ++i) {
                        try {
                            responses[i] = backend.complete(requests[i]);
                        } catch (...) {
                            errors[i] = std::current_exception();
                            break;
                        }
                    }
                }
                for (std::size_t i = 0; i < phase.size(); ++i) {
                    if (errors[i]) std::rethrow_exception(errors[i]);
                    append_message(transcript,
                                   Message{0, round, speakers[i]->name, Role::Debater,
                                           recipients(config, speakers[i]->name, round),
                                           responses[i]->text, responses[i]->usage});
                }
            }

            if (config.format.variant == ExchangeFormat::Variant::Summarized) {
                const Participant* summ = config.summarizer();
                std::vector<std::string> all_debaters;
                for (const auto* d : config.debaters()) all_debaters.push_back(d->name);
                for (const auto& group : group_partition(config)) {
                    std::vector<Message> group_messages;
                    for (const auto& m : transcript.messages) {
                        if (m.role == Role::Debater && m.round == round &&
                            std::find(group.begin(), group.end(), m.sender) !=
                                group.end()) {
                            group_messages.push_back(m);
                        }
                    }
                    Usage used;
                    std::string digest = summarize(*summ, group_messages,
                                                   config.format.max_words, backend,
                                                   used, options.params);
                    append_message(transcript,
                                   Message{0, round, summ->name, Role::Summarizer,
                                           all_debaters, digest, used});
                }
            }
        }

        std::vector<Vote> votes;
        if (vote_family(config.agreement)) {
            votes = extract_votes(transcript, config, backend, item_input,
                                  options.params, flags);
        }
        AgreementResult agreement = resolve_agreement(
            config.agreement, votes, transcript, config, backend, item_input,
            options.params);
        flags.insert(agreement.flags.begin(), agreement.flags.end());

        DebateOutcome outcome;
        outcome.decision = agreement.decision;
        outcome.agreement_path = agreement.path;
        outcome.flags = std::move(flags);
        outcome.total_usage = transcript.total_usage();
        outcome.transcript = std::move(transcript);
        return outcome;
    } catch (const BackendError& err) {
        throw DebateAborted(std::string("debate aborted: ") + err.what(),
                            std::move(transcript));
    }
}

}  // namespace mad
