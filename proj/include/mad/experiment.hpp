#pragma once

#include "mad/backend.hpp"
#include "mad/model.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace mad {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PipelineKind { Baseline, Mad };

struct BackendSettings {
    std::string endpoint = "https://api.openai.com/v1";
    ModelParams params;
    int max_in_flight = 4;
    double timeout_seconds = 120.0;
    int retry_initial_ms = 1000;  // first backoff step; doubles per attempt
};

/// One experiment setting, as read from a config file. The debate config is
/// structural only here; run validate_config to check its invariants.
struct ExperimentConfig {
    PipelineKind pipeline = PipelineKind::Mad;
    BackendSettings backend;
    TaskSpec task;
    std::string baseline_system_prompt;   // Baseline only
    std::optional<DebateConfig> debate;   // Mad only
};

/// Parses the JSON config file. Unknown keys, wrong types and missing
/// required sections raise ConfigError naming the offender.
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

/// Fingerprint covering the whole experiment (pipeline, task, prompts, and
/// the debate config when present). Backend endpoint and model are excluded;
/// the manifest records them separately.
std::string experiment_fingerprint(const ExperimentConfig& config);

struct RunManifest {
    std::string run_id;
    std::string pipeline;
    std::string config_fingerprint;
    std::string dataset_name;
    std::size_t dataset_items = 0;
    std::string backend_descriptor;
    std::string model_id;
    double temperature = 0.0;
    std::string started_at;   // ISO 8601 UTC
    std::string finished_at;  // ISO 8601 UTC
    double wall_seconds = 0.0;
    Usage totals;
};

/// Written atomically (temp file + rename); a run directory without a
/// manifest is an aborted run.
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& run_dir);

}  // namespace mad
