#include "mad/model.hpp"

#include "mad/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mad {

std::string role_name(Role role) {
    switch (role) {
        case Role::Debater: return "debater";
        case Role::Judge: return "judge";
        case Role::Summarizer: return "summarizer";
        case Role::Leader: return "leader";
        case Role::Verifier: return "verifier";
        case Role::Editor: return "editor";
    }
    return "unknown";
}

std::optional<Role> parse_role(std::string_view name) {
    for (Role r : {Role::Debater, Role::Judge, Role::Summarizer, Role::Leader,
                   Role::Verifier, Role::Editor}) {
        if (util::iequals(name, role_name(r))) return r;
    }
    return std::nullopt;
}

std::string Stance::describe() const {
    switch (kind) {
        case Kind::Neutral: return "neutral";
        case Kind::ArgueFor: return "argue for " + label;
        case Kind::ArgueAgainst: return "argue against " + label;
        case Kind::Critic: return "critic";
    }
    return "neutral";
}

std::vector<const Participant*> DebateConfig::debaters() const {
    std::vector<const Participant*> out;
    for (const auto& p : participants) {
        if (p.role == Role::Debater) out.push_back(&p);
    }
    return out;
}

const Participant* DebateConfig::find(std::string_view name) const {
    for (const auto& p : participants) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

const Participant* DebateConfig::judge() const {
    for (const auto& p : participants) {
        if (p.role == Role::Judge) return &p;
    }
    return nullptr;
}

const Participant* DebateConfig::summarizer() const {
    for (const auto& p : participants) {
        if (p.role == Role::Summarizer) return &p;
    }
    return nullptr;
}

namespace {

bool is_label(const TaskSpec& task, const std::string& candidate) {
    return std::any_of(task.labels.begin(), task.labels.end(),
                       [&](const std::string& l) { return l == candidate; });
}

}  // namespace

std::vector<Violation> validate_config(const DebateConfig& config) {
    std::vector<Violation> out;
    auto add = [&](const char* code, std::string message) {
        out.push_back({code, std::move(message)});
    };

    // Participants.
    std::set<std::string> seen_names;
    int judge_count = 0;
    std::vector<std::string> debater_names;
    for (const auto& p : config.participants) {
        if (p.name.empty()) {
            add(violation::NameEmpty, "participant with empty name");
        } else if (!seen_names.insert(p.name).second) {
            add(violation::DuplicateName, "duplicate participant name '" + p.name + "'");
        }
        switch (p.role) {
            case Role::Debater: debater_names.push_back(p.name); break;
            case Role::Judge: ++judge_count; break;
            case Role::Summarizer: break;
            case Role::Leader:
            case Role::Verifier:
            case Role::Editor:
                add(violation::RoleNotExecutable,
                    "participant '" + p.name + "' has role '" + role_name(p.role) +
                        "', which has no execution semantics");
                break;
        }
        const Stance& s = p.persona.stance;
        if ((s.kind == Stance::Kind::ArgueFor || s.kind == Stance::Kind::ArgueAgainst) &&
            !is_label(config.task, s.label)) {
            add(violation::StanceLabelUnknown,
                "stance label '" + s.label + "' of participant '" + p.name +
                    "' is not in the task label set");
        }
    }
    if (debater_names.size() < 2) {
        add(violation::AtLeastTwoDebaters,
            "config declares " + std::to_string(debater_names.size()) +
                " debater(s); at least 2 required");
    }
    if (judge_count > 1) {
        add(violation::MultipleJudges,
            "config declares " + std::to_string(judge_count) + " judges; at most 1 supported");
    }

    std::set<std::string> debater_set(debater_names.begin(), debater_names.end());

    // Topology.
    switch (config.topology.variant) {
        case Topology::Variant::Bilateral:
            if (debater_names.size() != 2) {
                add(violation::BilateralRequiresTwoDebaters,
                    "bilateral topology requires exactly 2 debaters, got " +
                        std::to_string(debater_names.size()));
            }
            break;
        case Topology::Variant::FullyConnected:
            break;
        case Topology::Variant::Grouped: {
            std::set<std::string> covered;
            bool disjoint = true;
            for (const auto& group : config.topology.groups) {
                if (group.empty()) add(violation::GroupEmpty, "empty debater group");
                for (const auto& name : group) {
                    if (!debater_set.count(name)) {
                        add(violation::GroupMemberUnknown,
                            "group member '" + name + "' is not a debater");
                    } else if (!covered.insert(name).second) {
                        disjoint = false;
                    }
                }
            }
            if (!disjoint) add(violation::GroupsNotDisjoint, "groups share debaters");
            if (covered != debater_set) {
                add(violation::GroupsIncomplete, "groups do not cover every debater");
            }
            break;
        }
        case Topology::Variant::Structured:
            for (const auto& [from, to] : config.topology.edges) {
                if (!debater_set.count(from) || !debater_set.count(to)) {
                    add(violation::EdgeEndpointUnknown,
                        "edge " + from + " -> " + to + " references a non-debater");
                } else if (from == to) {
                    add(violation::SelfEdge, "self-edge on '" + from + "'");
                }
            }
            break;
    }

    // Protocol.
    if (config.protocol.variant == Protocol::Variant::Sequential) {
        std::multiset<std::string> order(config.protocol.order.begin(),
                                         config.protocol.order.end());
        std::multiset<std::string> expected(debater_names.begin(), debater_names.end());
        if (order != expected) {
            add(violation::SequentialOrderNotPermutation,
                "sequential order is not a permutation of the debaters");
        }
    }

    // Exchange format.
    if (config.format.variant == ExchangeFormat::Variant::Summarized) {
        if (config.summarizer() == nullptr) {
            add(violation::SummarizedRequiresSummarizer,
                "summarized exchange requires a summarizer participant");
        }
        if (config.format.max_words < 1) {
            add(violation::SummarizedMaxWordsInvalid,
                "summarized max_words must be a positive integer");
        }
    }

    // Agreement rule.
    bool judge_family = config.agreement == AgreementRule::JudgeDecision ||
                        config.agreement == AgreementRule::JudgeOnTie;
    if (judge_family && judge_count != 1) {
        add(violation::AgreementRequiresJudge,
            "judge-based agreement requires exactly one judge participant");
    }
    if (config.agreement == AgreementRule::WeightedVote &&
        config.format.variant != ExchangeFormat::Variant::WithConfidence) {
        add(violation::WeightedVoteRequiresConfidence,
            "weighted vote requires the with-confidence exchange format");
    }
    if (config.agreement == AgreementRule::Average && !config.task.numeric) {
        add(violation::AverageRequiresNumericTask,
            "averaging agreement is only valid for numeric-answer tasks");
    }

    // Task.
    if (config.task.numeric) {
        if (!config.task.labels.empty()) {
            add(violation::TaskLabelsInvalid, "numeric task must not declare labels");
        }
    } else {
        if (config.task.labels.size() < 2) {
            add(violation::TaskLabelsInvalid,
                "label task must declare at least 2 labels");
        }
        std::set<std::string> seen_labels;
        for (const auto& label : config.task.labels) {
            if (label.empty()) {
                add(violation::TaskLabelsInvalid, "empty label in task label set");
            } else if (!seen_labels.insert(util::to_lower(label)).second) {
                add(violation::DuplicateTaskLabel, "duplicate task label '" + label + "'");
            }
        }
        if (!config.task.fallback_label.empty() &&
            !is_label(config.task, config.task.fallback_label)) {
            add(violation::FallbackLabelUnknown,
                "fallback label '" + config.task.fallback_label +
                    "' is not in the task label set");
        }
    }
    if (config.task.prompt_template.find("{input}") == std::string::npos) {
        add(violation::TaskTemplateMissingPlaceholder,
            "task prompt template must contain the {input} placeholder");
    }

    if (config.rounds < 0) {
        add(violation::RoundsNegative, "rounds must be >= 0");
    }

    return out;
}

std::vector<std::string> recipients(const DebateConfig& config,
                                    std::string_view sender, int round) {
    if (round < 0) throw std::invalid_argument("recipients: negative round");
    const Participant* p = config.find(sender);
    if (p == nullptr || p->role != Role::Debater) {
        throw std::invalid_argument("recipients: unknown debater '" +
                                    std::string(sender) + "'");
    }

    auto debs = config.debaters();
    std::vector<std::string> out;
    switch (config.topology.variant) {
        case Topology::Variant::Bilateral:
        case Topology::Variant::FullyConnected:
            for (const auto* d : debs) {
                if (d->name != sender) out.push_back(d->name);
            }
            break;
        case Topology::Variant::Grouped: {
            const std::vector<std::string>* own = nullptr;
            for (const auto& group : config.topology.groups) {
                if (std::find(group.begin(), group.end(), sender) != group.end()) {
                    own = &group;
                    break;
                }
            }
            if (own) {
                for (const auto* d : debs) {
                    if (d->name != sender &&
                        std::find(own->begin(), own->end(), d->name) != own->end()) {
                        out.push_back(d->name);
                    }
                }
            }
            break;
        }
        case Topology::Variant::Structured: {
            std::set<std::string> targets;
            for (const auto& [from, to] : config.topology.edges) {
                if (from == sender && to != sender) targets.insert(to);
            }
            for (const auto* d : debs) {
                if (targets.count(d->name)) out.push_back(d->name);
            }
            break;
        }
    }
    return out;
}

std::vector<std::vector<std::string>> speaking_schedule(const DebateConfig& config,
                                                        int round) {
    if (round < 0 || round > config.rounds) {
        throw std::out_of_range("speaking_schedule: round " + std::to_string(round) +
                                " outside [0, " + std::to_string(config.rounds) + "]");
    }
    auto debs = config.debaters();
    auto simultaneous = [&] {
        std::vector<std::string> phase;
        for (const auto* d : debs) phase.push_back(d->name);
        return std::vector<std::vector<std::string>>{std::move(phase)};
    };
    auto sequential = [&](const std::vector<std::string>& order) {
        std::vector<std::vector<std::string>> phases;
        for (const auto& name : order) phases.push_back({name});
        return phases;
    };

    switch (config.protocol.variant) {
        case Protocol::Variant::Simultaneous:
            return simultaneous();
        case Protocol::Variant::Sequential:
            return sequential(config.protocol.order);
        case Protocol::Variant::Hybrid: {
            if (round == 0) return simultaneous();
            std::vector<std::string> order;
            for (const auto* d : debs) order.push_back(d->name);
            return sequential(order);
        }
    }
    return {};
}

namespace {

nlohmann::ordered_json stance_json(const Stance& s) {
    switch (s.kind) {
        case Stance::Kind::Neutral: return "neutral";
        case Stance::Kind::Critic: return "critic";
        case Stance::Kind::ArgueFor: return {{"argue_for", s.label}};
        case Stance::Kind::ArgueAgainst: return {{"argue_against", s.label}};
    }
    return "neutral";
}

}  // namespace

std::string config_fingerprint(const DebateConfig& config) {
    nlohmann::ordered_json j;
    auto& parts = j["participants"] = nlohmann::ordered_json::array();
    for (const auto& p : config.participants) {
        parts.push_back({{"name", p.name},
                         {"role", role_name(p.role)},
                         {"background", p.persona.background},
                         {"stance", stance_json(p.persona.stance)},
                         {"traits", p.persona.traits},
                         {"system_prompt", p.system_prompt}});
    }
    switch (config.topology.variant) {
        case Topology::Variant::Bilateral: j["topology"] = "bilateral"; break;
        case Topology::Variant::FullyConnected: j["topology"] = "fully_connected"; break;
        case Topology::Variant::Grouped:
            j["topology"] = {{"grouped", config.topology.groups}};
            break;
        case Topology::Variant::Structured: {
            auto edges = nlohmann::ordered_json::array();
            for (const auto& [from, to] : config.topology.edges) {
                edges.push_back({from, to});
            }
            j["topology"] = {{"structured", edges}};
            break;
        }
    }
    switch (config.protocol.variant) {
        case Protocol::Variant::Simultaneous: j["protocol"] = "simultaneous"; break;
        case Protocol::Variant::Sequential:
            j["protocol"] = {{"sequential", config.protocol.order}};
            break;
        case Protocol::Variant::Hybrid: j["protocol"] = "hybrid"; break;
    }
    switch (config.format.variant) {
        case ExchangeFormat::Variant::Verbatim: j["format"] = "verbatim"; break;
        case ExchangeFormat::Variant::Summarized:
            j["format"] = {{"summarized", config.format.max_words}};
            break;
        case ExchangeFormat::Variant::WithConfidence:
            j["format"] = "with_confidence";
            break;
    }
    switch (config.agreement) {
        case AgreementRule::MajorityVote: j["agreement"] = "majority_vote"; break;
        case AgreementRule::WeightedVote: j["agreement"] = "weighted_vote"; break;
        case AgreementRule::Average: j["agreement"] = "average"; break;
        case AgreementRule::JudgeDecision: j["agreement"] = "judge_decision"; break;
        case AgreementRule::JudgeOnTie: j["agreement"] = "judge_on_tie"; break;
    }
    j["rounds"] = config.rounds;
    j["task"] = {{"labels", config.task.labels},
                 {"numeric", config.task.numeric},
                 {"prompt_template", config.task.prompt_template},
                 {"fallback_label", config.task.fallback_label}};
    return util::fnv1a64_hex(j.dump());
}

}  // namespace mad
