#pragma once

#include "mad/dataset.hpp"
#include "mad/engine.hpp"

#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace mad {

struct PredictionRecord {
    std::string id;
    std::string predicted;
    std::string gold;
    bool correct = false;
    std::set<Flag> flags;
    Usage usage;
    std::string transcript_ref;  // empty for the baseline pipeline
};

/// Extracts F/NF from a model reply: last "CLASSIFICATION:" marker first,
/// then the last standalone token, NF before F so "NF" is never read as "F".
std::optional<std::string> parse_label(const std::string& text);

/// Persists a transcript and returns the reference stored in the record.
/// Called from worker threads; item ids are unique per run.
using TranscriptSink =
    std::function<std::string(const std::string& item_id, const Transcript&)>;

struct PipelineOptions {
    int max_concurrency = 4;
    bool parallel_phases = true;
    TranscriptSink transcript_sink;
};

struct BaselineSpec {
    std::string system_prompt;
    TaskSpec task;
};

/// Single-agent pipeline: one completion per item (item-at-a-time so token
/// accounting and pairing stay per-item), parsed by parse_label with one
/// clarification retry. Always yields one record per item, in dataset order.
std::vector<PredictionRecord> run_baseline(const Dataset& dataset,
                                           const BaselineSpec& spec,
                                           const ModelParams& params, Backend& backend,
                                           const PipelineOptions& options = {});

/// Debate pipeline: one run_debate per item. Records carry the debate's exact
/// usage and a transcript reference when a sink is configured.
std::vector<PredictionRecord> run_mad(const Dataset& dataset, const DebateConfig& config,
                                      const ModelParams& params, Backend& backend,
                                      const PipelineOptions& options = {});

// Predictions CSV: id,predicted,gold,correct,flags,input_tokens,output_tokens,
// transcript_ref. Flags are ';'-joined.
void write_predictions_csv(std::ostream& out,
                           const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions_csv(std::istream& in);

}  // namespace mad
