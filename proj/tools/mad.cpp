// mad: configure, run, evaluate and compare multi-agent debate experiments.

#include "mad/dataset.hpp"
#include "mad/engine.hpp"
#include "mad/experiment.hpp"
#include "mad/metrics.hpp"
#include "mad/mock_backend.hpp"
#include "mad/model.hpp"
#include "mad/openai_backend.hpp"
#include "mad/pipeline.hpp"
#include "mad/util.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfigInvalid = 1;
constexpr int kExitDataError = 2;
constexpr int kExitBackendUnreachable = 3;

struct RunArgs {
    std::string config_path;
    std::string dataset_path;
    std::string out_dir;
    std::string backend_kind;
    std::string mock_script;
    std::string label_map_path;
    std::string prices_path;
    int max_concurrency = 4;
    bool dry_run = false;
};

std::string sanitize_filename(const std::string& id) {
    std::string out;
    for (char c : id) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                  c == '_';
        out += ok ? c : '_';
    }
    return out;
}

std::optional<std::string> env_value(const char* name) {
    const char* value = std::getenv(name);
    if (value == nullptr || *value == '\0') return std::nullopt;
    return std::string(value);
}

/// The run command drives the binary F/NF classification harness; the
/// engine itself accepts arbitrary label sets through the library API.
bool binary_fnf_task(const mad::TaskSpec& task) {
    if (task.numeric || task.labels.size() != 2) return false;
    bool has_f = false;
    bool has_nf = false;
    for (const auto& l : task.labels) {
        if (l == "F") has_f = true;
        if (l == "NF") has_nf = true;
    }
    return has_f && has_nf;
}

std::unique_ptr<mad::Backend> make_backend(const RunArgs& args,
                                           const mad::ExperimentConfig& config,
                                           std::string* error) {
    if (args.backend_kind == "mock") {
        if (args.mock_script.empty()) {
            *error = "--backend mock requires --mock-script";
            return nullptr;
        }
        try {
            return std::make_unique<mad::MockBackend>(
                mad::MockBackend::load(args.mock_script));
        } catch (const std::exception& ex) {
            *error = ex.what();
            return nullptr;
        }
    }
    mad::RemoteConfig remote;
    remote.endpoint = env_value("MAD_ENDPOINT").value_or(config.backend.endpoint);
    auto key = env_value("MAD_API_KEY");
    if (!key) key = env_value("OPENAI_API_KEY");
    if (!key) {
        *error = "remote backend needs MAD_API_KEY (or OPENAI_API_KEY) in the environment";
        return nullptr;
    }
    remote.api_key = *key;
    remote.params = config.backend.params;
    remote.timeout = std::chrono::milliseconds(
        static_cast<long>(config.backend.timeout_seconds * 1000.0));
    remote.retry.initial_backoff =
        std::chrono::milliseconds(std::max(0, config.backend.retry_initial_ms));
    remote.max_in_flight = std::max(config.backend.max_in_flight, args.max_concurrency);
    try {
        return std::make_unique<mad::OpenAiBackend>(std::move(remote));
    } catch (const std::exception& ex) {
        *error = ex.what();
        return nullptr;
    }
}

std::vector<mad::PredictionRecord> execute_pipeline(const mad::ExperimentConfig& config,
                                                    const mad::Dataset& dataset,
                                                    mad::Backend& backend,
                                                    const mad::PipelineOptions& options) {
    if (config.pipeline == mad::PipelineKind::Baseline) {
        mad::BaselineSpec spec{config.baseline_system_prompt, config.task};
        return mad::run_baseline(dataset, spec, config.backend.params, backend, options);
    }
    return mad::run_mad(dataset, *config.debate, config.backend.params, backend, options);
}

int cmd_run(const RunArgs& args) {
    mad::ExperimentConfig config;
    try {
        config = mad::load_experiment_config(args.config_path);
    } catch (const mad::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return kExitConfigInvalid;
    }
    if (config.pipeline == mad::PipelineKind::Mad) {
        auto violations = mad::validate_config(*config.debate);
        if (!violations.empty()) {
            std::cerr << "config is invalid (" << violations.size() << " violation(s)):\n";
            for (const auto& v : violations) {
                std::cerr << "  " << v.code << ": " << v.message << '\n';
            }
            return kExitConfigInvalid;
        }
    }
    if (!binary_fnf_task(config.task)) {
        std::cerr << "config error: the run command requires the binary F/NF task\n";
        return kExitConfigInvalid;
    }

    mad::Dataset dataset;
    try {
        mad::LabelMap labels = args.label_map_path.empty()
                                   ? mad::LabelMap::promise_default()
                                   : mad::LabelMap::load(args.label_map_path);
        dataset = mad::load_dataset(args.dataset_path, labels);
    } catch (const mad::DataError& ex) {
        std::cerr << "dataset error: " << ex.what() << '\n';
        return kExitDataError;
    }

    std::string backend_error;
    auto backend = make_backend(args, config, &backend_error);
    if (!backend) {
        std::cerr << "backend error: " << backend_error << '\n';
        return kExitBackendUnreachable;
    }

    mad::PipelineOptions options;
    options.max_concurrency = args.max_concurrency;

    if (args.dry_run) {
        const std::size_t probe_size = std::min<std::size_t>(3, dataset.items.size());
        mad::Dataset probe{dataset.name, {dataset.items.begin(),
                                          dataset.items.begin() +
                                              static_cast<std::ptrdiff_t>(probe_size)}};
        mad::Usage probe_usage;
        if (probe_size > 0) {
            auto records = execute_pipeline(config, probe, *backend, options);
            for (const auto& r : records) probe_usage += r.usage;
        }
        const double scale = probe_size == 0
                                 ? 0.0
                                 : static_cast<double>(dataset.items.size()) /
                                       static_cast<double>(probe_size);
        auto projected = [&](std::int64_t tokens) {
            return static_cast<std::int64_t>(
                std::llround(static_cast<double>(tokens) * scale));
        };
        mad::Usage estimate{projected(probe_usage.input_tokens),
                            projected(probe_usage.output_tokens)};
        std::cout << "dry run: " << dataset.items.size() << " items, probe of "
                  << probe_size << '\n';
        std::cout << "estimated input tokens:  " << estimate.input_tokens << '\n';
        std::cout << "estimated output tokens: " << estimate.output_tokens << '\n';
        std::cout << "estimated total tokens:  " << estimate.total() << '\n';
        if (!args.prices_path.empty()) {
            try {
                auto prices = mad::PriceTable::load(args.prices_path);
                std::cout << "estimated cost: "
                          << mad::format_cost(mad::estimate_cost(estimate, prices)) << ' '
                          << prices.currency << '\n';
            } catch (const std::exception& ex) {
                std::cerr << "price file error: " << ex.what() << '\n';
                return kExitDataError;
            }
        }
        return 0;
    }

    fs::path out_dir(args.out_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        std::cerr << "cannot create output directory " << out_dir << ": " << ec.message()
                  << '\n';
        return kExitDataError;
    }
    if (config.pipeline == mad::PipelineKind::Mad) {
        fs::create_directories(out_dir / "transcripts", ec);
        options.transcript_sink = [out_dir](const std::string& id,
                                            const mad::Transcript& transcript) {
            std::string name = "transcripts/" + sanitize_filename(id) + ".jsonl";
            std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
            mad::write_transcript_jsonl(out, transcript);
            return name;
        };
    }

    auto started = std::chrono::system_clock::now();
    auto t0 = std::chrono::steady_clock::now();
    auto records = execute_pipeline(config, dataset, *backend, options);
    auto finished = std::chrono::system_clock::now();
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
        std::ofstream out(out_dir / "predictions.csv", std::ios::binary | std::ios::trunc);
        if (!out) {
            std::cerr << "cannot write " << (out_dir / "predictions.csv") << '\n';
            return kExitDataError;
        }
        mad::write_predictions_csv(out, records);
    }

    mad::Usage totals;
    std::int64_t failures = 0;
    std::int64_t correct = 0;
    for (const auto& r : records) {
        totals += r.usage;
        if (r.flags.count(mad::Flag::ParseFailure)) ++failures;
        if (r.correct) ++correct;
    }

    mad::RunManifest manifest;
    manifest.config_fingerprint = mad::experiment_fingerprint(config);
    manifest.run_id = mad::util::iso8601_utc(started) + "-" +
                      manifest.config_fingerprint.substr(0, 8);
    manifest.pipeline =
        config.pipeline == mad::PipelineKind::Baseline ? "baseline" : "mad";
    manifest.dataset_name = dataset.name;
    manifest.dataset_items = dataset.items.size();
    manifest.backend_descriptor = backend->descriptor();
    manifest.model_id = config.backend.params.model_id;
    manifest.temperature = config.backend.params.temperature;
    manifest.started_at = mad::util::iso8601_utc(started);
    manifest.finished_at = mad::util::iso8601_utc(finished);
    manifest.wall_seconds = wall;
    manifest.totals = totals;
    mad::write_manifest(out_dir, manifest);

    std::cout << "run complete: " << records.size() << " predictions, " << correct
              << " correct, " << failures << " parse failure(s)\n";
    std::cout << "tokens: " << totals.input_tokens << " in, " << totals.output_tokens
              << " out\n";
    std::cout << "output: " << out_dir.string() << '\n';

    // A remote run where every single request died without consuming a token
    // is an unreachable backend, not a result.
    if (args.backend_kind == "remote" && !records.empty() &&
        failures == static_cast<std::int64_t>(records.size()) && totals.total() == 0) {
        std::cerr << "backend error: every request failed without a response; "
                     "treating the backend as unreachable\n";
        return kExitBackendUnreachable;
    }
    return 0;
}

int cmd_evaluate(const std::string& predictions_path, std::string json_path) {
    std::vector<mad::PredictionRecord> records;
    try {
        std::ifstream in(predictions_path, std::ios::binary);
        if (!in) throw mad::DataError("cannot open " + predictions_path);
        records = mad::read_predictions_csv(in);
    } catch (const mad::DataError& ex) {
        std::cerr << "predictions error: " << ex.what() << '\n';
        return kExitDataError;
    }
    mad::MetricsReport report;
    try {
        report = mad::compute_metrics(records);
    } catch (const mad::DataError& ex) {
        std::cerr << "metrics error: " << ex.what() << '\n';
        return kExitDataError;
    }
    std::cout << mad::render_metrics_table(report);
    if (json_path.empty()) {
        json_path = (fs::path(predictions_path).parent_path() / "metrics.json").string();
    }
    std::ofstream json_out(json_path, std::ios::binary | std::ios::trunc);
    if (!json_out) {
        std::cerr << "cannot write " << json_path << '\n';
        return kExitDataError;
    }
    json_out << mad::metrics_to_json(report) << '\n';
    std::cout << "metrics written to " << json_path << '\n';
    return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& variant_name) {
    std::vector<mad::PredictionRecord> a;
    std::vector<mad::PredictionRecord> b;
    try {
        std::ifstream in_a(a_path, std::ios::binary);
        if (!in_a) throw mad::DataError("cannot open " + a_path);
        a = mad::read_predictions_csv(in_a);
        std::ifstream in_b(b_path, std::ios::binary);
        if (!in_b) throw mad::DataError("cannot open " + b_path);
        b = mad::read_predictions_csv(in_b);
    } catch (const mad::DataError& ex) {
        std::cerr << "predictions error: " << ex.what() << '\n';
        return kExitDataError;
    }

    mad::McNemarVariant variant = mad::McNemarVariant::ContinuityCorrected;
    if (variant_name == "uncorrected") variant = mad::McNemarVariant::Uncorrected;
    else if (variant_name == "exact") variant = mad::McNemarVariant::ExactBinomial;

    try {
        auto table = mad::pair_predictions(a, b);
        auto result = mad::mcnemar(table, variant);
        std::cout << mad::render_comparison(table, result);
    } catch (const mad::DataError& ex) {
        std::cerr << "comparison error: " << ex.what() << '\n';
        return kExitDataError;
    }
    return 0;
}

int cmd_cost(const std::vector<std::string>& run_dirs, const std::string& prices_path) {
    mad::PriceTable prices;
    try {
        prices = mad::PriceTable::load(prices_path);
    } catch (const std::exception& ex) {
        std::cerr << "price file error: " << ex.what() << '\n';
        return kExitDataError;
    }
    std::vector<std::pair<std::string, mad::UsageReport>> rows;
    for (const auto& dir : run_dirs) {
        try {
            auto manifest = mad::load_manifest(dir);
            std::ifstream in(fs::path(dir) / "predictions.csv", std::ios::binary);
            if (!in) throw mad::DataError("missing predictions.csv in " + dir);
            auto records = mad::read_predictions_csv(in);
            auto report = mad::usage_report(records, prices, manifest.wall_seconds);
            std::string name = fs::path(dir).filename().string();
            if (name.empty()) name = dir;
            rows.emplace_back(name, report);
        } catch (const std::exception& ex) {
            std::cerr << "run error: " << ex.what() << '\n';
            return kExitDataError;
        }
    }
    std::cout << mad::render_usage_table(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent debate experiment harness"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run a configured experiment over a dataset");
    run->add_option("--config", run_args.config_path, "experiment config file")->required();
    run->add_option("--dataset", run_args.dataset_path, "dataset CSV (id,text,label)")
        ->required();
    run->add_option("--out", run_args.out_dir, "output run directory");
    run->add_option("--backend", run_args.backend_kind, "backend: remote or mock")
        ->required()
        ->check(CLI::IsMember({"remote", "mock"}));
    run->add_option("--mock-script", run_args.mock_script, "mock response script (JSON)");
    run->add_option("--max-concurrency", run_args.max_concurrency,
                    "max items in flight (default 4)")
        ->check(CLI::PositiveNumber);
    run->add_option("--label-map", run_args.label_map_path,
                    "dataset label mapping file (default: built-in PROMISE map)");
    run->add_option("--prices", run_args.prices_path, "price table for --dry-run estimates");
    run->add_flag("--dry-run", run_args.dry_run,
                  "probe a few items, print a cost estimate, write nothing");

    std::string predictions_path;
    std::string json_path;
    auto* evaluate = app.add_subcommand("evaluate", "correctness metrics for one run");
    evaluate->add_option("--predictions", predictions_path, "predictions CSV")->required();
    evaluate->add_option("--json", json_path, "metrics JSON output path");

    std::string a_path;
    std::string b_path;
    std::string variant = "corrected";
    auto* compare = app.add_subcommand(
        "compare", "paired McNemar comparison of two prediction files");
    compare->add_option("--a", a_path, "first predictions CSV (the candidate)")->required();
    compare->add_option("--b", b_path, "second predictions CSV (the reference)")->required();
    compare->add_option("--variant", variant, "corrected | uncorrected | exact")
        ->check(CLI::IsMember({"corrected", "uncorrected", "exact"}));

    std::vector<std::string> run_dirs;
    std::string prices_path;
    auto* cost = app.add_subcommand("cost", "token and cost report for finished runs");
    cost->add_option("--run", run_dirs, "run directory (repeatable)")->required();
    cost->add_option("--prices", prices_path, "price table JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (!run_args.dry_run && run_args.out_dir.empty()) {
            std::cerr << "run error: --out is required unless --dry-run is set\n";
            return kExitConfigInvalid;
        }
        return cmd_run(run_args);
    }
    if (evaluate->parsed()) return cmd_evaluate(predictions_path, json_path);
    if (compare->parsed()) return cmd_compare(a_path, b_path, variant);
    if (cost->parsed()) return cmd_cost(run_dirs, prices_path);
    return 0;
}
