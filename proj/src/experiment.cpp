#include "mad/experiment.hpp"

#include "mad/util.hpp"

#include "json.hpp"

#include <fstream>

namespace mad {

namespace {

using nlohmann::json;

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + " must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("unknown key '" + item.key() + "' in " + context);
        }
    }
}

template <typename T>
T get_as(const json& obj, const char* key, const std::string& context) {
    if (!obj.contains(key)) {
        throw ConfigError("missing key '" + std::string(key) + "' in " + context);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + std::string(key) + "' in " + context +
                          " has the wrong type");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, const std::string& context, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + std::string(key) + "' in " + context +
                          " has the wrong type");
    }
}

Stance parse_stance(const json& j, const std::string& context) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "neutral") return Stance::neutral();
        if (s == "critic") return Stance::critic();
        throw ConfigError("unknown stance '" + s + "' in " + context);
    }
    expect_keys(j, {"argue_for", "argue_against"}, context + ".stance");
    if (j.contains("argue_for") && j.contains("argue_against")) {
        throw ConfigError(context + ".stance cannot be both argue_for and argue_against");
    }
    if (j.contains("argue_for")) {
        return Stance::argue_for(get_as<std::string>(j, "argue_for", context));
    }
    if (j.contains("argue_against")) {
        return Stance::argue_against(get_as<std::string>(j, "argue_against", context));
    }
    throw ConfigError(context + ".stance must be a string or {argue_for|argue_against}");
}

Participant parse_participant(const json& j, std::size_t index) {
    const std::string context = "participants[" + std::to_string(index) + "]";
    expect_keys(j, {"name", "role", "system_prompt", "persona"}, context);
    Participant p;
    p.name = get_as<std::string>(j, "name", context);
    std::string role = get_as<std::string>(j, "role", context);
    auto parsed = parse_role(role);
    if (!parsed) throw ConfigError("unknown role '" + role + "' in " + context);
    p.role = *parsed;
    p.system_prompt = get_as<std::string>(j, "system_prompt", context);
    if (j.contains("persona")) {
        const auto& persona = j.at("persona");
        expect_keys(persona, {"background", "stance", "traits"}, context + ".persona");
        p.persona.background = get_or<std::string>(persona, "background", context, "");
        if (persona.contains("stance")) {
            p.persona.stance = parse_stance(persona.at("stance"), context);
        }
        p.persona.traits =
            get_or<std::vector<std::string>>(persona, "traits", context, {});
    }
    return p;
}

Topology parse_topology(const json& j) {
    expect_keys(j, {"variant", "groups", "edges"}, "topology");
    std::string variant = get_as<std::string>(j, "variant", "topology");
    if (variant == "bilateral") return Topology::bilateral();
    if (variant == "fully_connected") return Topology::fully_connected();
    if (variant == "grouped") {
        return Topology::grouped(
            get_as<std::vector<std::vector<std::string>>>(j, "groups", "topology"));
    }
    if (variant == "structured") {
        auto raw = get_as<std::vector<std::vector<std::string>>>(j, "edges", "topology");
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& e : raw) {
            if (e.size() != 2) {
                throw ConfigError("topology.edges entries must be [from, to] pairs");
            }
            edges.emplace_back(e[0], e[1]);
        }
        return Topology::structured(std::move(edges));
    }
    throw ConfigError("unknown topology variant '" + variant + "'");
}

Protocol parse_protocol(const json& j) {
    expect_keys(j, {"variant", "order"}, "protocol");
    std::string variant = get_as<std::string>(j, "variant", "protocol");
    if (variant == "simultaneous") return Protocol::simultaneous();
    if (variant == "hybrid") return Protocol::hybrid();
    if (variant == "sequential") {
        return Protocol::sequential(
            get_as<std::vector<std::string>>(j, "order", "protocol"));
    }
    throw ConfigError("unknown protocol variant '" + variant + "'");
}

ExchangeFormat parse_format(const json& j) {
    expect_keys(j, {"variant", "max_words"}, "format");
    std::string variant = get_as<std::string>(j, "variant", "format");
    if (variant == "verbatim") return ExchangeFormat::verbatim();
    if (variant == "with_confidence") return ExchangeFormat::with_confidence();
    if (variant == "summarized") {
        return ExchangeFormat::summarized(get_as<int>(j, "max_words", "format"));
    }
    throw ConfigError("unknown format variant '" + variant + "'");
}

AgreementRule parse_agreement(const std::string& name) {
    if (name == "majority_vote") return AgreementRule::MajorityVote;
    if (name == "weighted_vote") return AgreementRule::WeightedVote;
    if (name == "average") return AgreementRule::Average;
    if (name == "judge_decision") return AgreementRule::JudgeDecision;
    if (name == "judge_on_tie") return AgreementRule::JudgeOnTie;
    throw ConfigError("unknown agreement rule '" + name + "'");
}

TaskSpec parse_task(const json& j) {
    expect_keys(j, {"labels", "numeric", "prompt_template", "fallback_label"}, "task");
    TaskSpec task;
    task.labels = get_or<std::vector<std::string>>(j, "labels", "task", {});
    task.numeric = get_or<bool>(j, "numeric", "task", false);
    task.prompt_template = get_as<std::string>(j, "prompt_template", "task");
    task.fallback_label = get_or<std::string>(j, "fallback_label", "task", "");
    return task;
}

DebateConfig parse_debate(const json& j, const TaskSpec& task) {
    expect_keys(j, {"participants", "topology", "protocol", "format", "agreement",
                    "rounds"},
                "debate");
    DebateConfig config;
    config.task = task;
    if (!j.contains("participants") || !j.at("participants").is_array()) {
        throw ConfigError("debate.participants must be an array");
    }
    std::size_t index = 0;
    for (const auto& pj : j.at("participants")) {
        config.participants.push_back(parse_participant(pj, index++));
    }
    config.topology = parse_topology(j.at("topology"));
    config.protocol = parse_protocol(j.at("protocol"));
    config.format = parse_format(j.at("format"));
    config.agreement = parse_agreement(get_as<std::string>(j, "agreement", "debate"));
    config.rounds = get_as<int>(j, "rounds", "debate");
    return config;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ConfigError("malformed config " + file.string() + ": " + ex.what());
    }
    expect_keys(j, {"pipeline", "backend", "task", "baseline", "debate"}, "config root");

    ExperimentConfig config;
    std::string pipeline = get_as<std::string>(j, "pipeline", "config root");
    if (pipeline == "baseline") config.pipeline = PipelineKind::Baseline;
    else if (pipeline == "mad") config.pipeline = PipelineKind::Mad;
    else throw ConfigError("pipeline must be 'baseline' or 'mad', got '" + pipeline + "'");

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        expect_keys(b, {"endpoint", "model_id", "temperature", "max_output_tokens",
                        "max_in_flight", "timeout_seconds", "retry_initial_ms"},
                    "backend");
        config.backend.endpoint =
            get_or<std::string>(b, "endpoint", "backend", config.backend.endpoint);
        config.backend.params.model_id =
            get_or<std::string>(b, "model_id", "backend", "gpt-4o");
        config.backend.params.temperature = get_or<double>(b, "temperature", "backend", 0.0);
        if (b.contains("max_output_tokens")) {
            config.backend.params.max_output_tokens =
                get_as<int>(b, "max_output_tokens", "backend");
        }
        config.backend.max_in_flight = get_or<int>(b, "max_in_flight", "backend", 4);
        config.backend.timeout_seconds =
            get_or<double>(b, "timeout_seconds", "backend", 120.0);
        config.backend.retry_initial_ms =
            get_or<int>(b, "retry_initial_ms", "backend", 1000);
    }

    if (!j.contains("task")) throw ConfigError("config is missing the task section");
    config.task = parse_task(j.at("task"));

    if (config.pipeline == PipelineKind::Baseline) {
        if (!j.contains("baseline")) {
            throw ConfigError("baseline pipeline requires a baseline section");
        }
        const auto& b = j.at("baseline");
        expect_keys(b, {"system_prompt"}, "baseline");
        config.baseline_system_prompt = get_as<std::string>(b, "system_prompt", "baseline");
        if (j.contains("debate")) {
            throw ConfigError("baseline pipeline must not declare a debate section");
        }
    } else {
        if (!j.contains("debate")) {
            throw ConfigError("mad pipeline requires a debate section");
        }
        if (j.contains("baseline")) {
            throw ConfigError("mad pipeline must not declare a baseline section");
        }
        config.debate = parse_debate(j.at("debate"), config.task);
    }
    return config;
}

std::string experiment_fingerprint(const ExperimentConfig& config) {
    if (config.pipeline == PipelineKind::Mad) {
        return config_fingerprint(*config.debate);
    }
    nlohmann::ordered_json j;
    j["pipeline"] = "baseline";
    j["system_prompt"] = config.baseline_system_prompt;
    j["task"] = {{"labels", config.task.labels},
                 {"numeric", config.task.numeric},
                 {"prompt_template", config.task.prompt_template},
                 {"fallback_label", config.task.fallback_label}};
    return util::fnv1a64_hex(j.dump());
}

void write_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest) {
    nlohmann::ordered_json j;
    j["run_id"] = manifest.run_id;
    j["pipeline"] = manifest.pipeline;
    j["config_fingerprint"] = manifest.config_fingerprint;
    j["dataset"] = {{"name", manifest.dataset_name}, {"items", manifest.dataset_items}};
    j["backend"] = {{"descriptor", manifest.backend_descriptor},
                    {"model_id", manifest.model_id},
                    {"temperature", manifest.temperature}};
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["wall_seconds"] = manifest.wall_seconds;
    j["totals"] = {{"input_tokens", manifest.totals.input_tokens},
                   {"output_tokens", manifest.totals.output_tokens}};

    auto tmp = run_dir / "manifest.json.tmp";
    auto final_path = run_dir / "manifest.json";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
    auto path = run_dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("run directory has no manifest (aborted run?): " +
                                 path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw std::runtime_error("malformed manifest " + path.string() + ": " + ex.what());
    }
    RunManifest manifest;
    try {
        manifest.run_id = j.at("run_id").get<std::string>();
        manifest.pipeline = j.at("pipeline").get<std::string>();
        manifest.config_fingerprint = j.at("config_fingerprint").get<std::string>();
        manifest.dataset_name = j.at("dataset").at("name").get<std::string>();
        manifest.dataset_items = j.at("dataset").at("items").get<std::size_t>();
        manifest.backend_descriptor = j.at("backend").at("descriptor").get<std::string>();
        manifest.model_id = j.at("backend").at("model_id").get<std::string>();
        manifest.temperature = j.at("backend").at("temperature").get<double>();
        manifest.started_at = j.at("started_at").get<std::string>();
        manifest.finished_at = j.at("finished_at").get<std::string>();
        manifest.wall_seconds = j.at("wall_seconds").get<double>();
        manifest.totals.input_tokens = j.at("totals").at("input_tokens").get<std::int64_t>();
        manifest.totals.output_tokens = j.at("totals").at("output_tokens").get<std::int64_t>();
    } catch (const json::exception& ex) {
        throw std::runtime_error("manifest " + path.string() + " missing field: " +
                                 ex.what());
    }
    return manifest;
}

}  // namespace mad
