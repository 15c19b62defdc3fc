#include "mad/pipeline.hpp"

#include "mad/util.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace mad {

std::optional<std::string> parse_label(const std::string& text) {
    static const std::vector<std::string> kLabels = {"F", "NF"};
    return parse_decision_label(text, kLabels);
}

namespace {

std::string label_options(const TaskSpec& task) {
    std::string out;
    for (std::size_t i = 0; i < task.labels.size(); ++i) {
        if (i) out += '|';
        out += task.labels[i];
    }
    return out;
}

std::string classification_clarification(const TaskSpec& task) {
    return "Your previous reply could not be parsed. Reply again and end with "
           "CLASSIFICATION: <" +
           label_options(task) + ">.";
}

PredictionRecord make_record(const LabeledRequirement& item, std::string predicted,
                             std::set<Flag> flags, Usage usage,
                             std::string transcript_ref) {
    PredictionRecord record;
    record.id = item.id;
    record.gold = item.gold;
    record.predicted = std::move(predicted);
    record.flags = std::move(flags);
    record.usage = usage;
    record.transcript_ref = std::move(transcript_ref);
    // Parse failures never count as correct, even when the fallback label
    // happens to coincide with the gold one.
    record.correct =
        !record.flags.count(Flag::ParseFailure) && record.predicted == record.gold;
    return record;
}

}  // namespace

std::vector<PredictionRecord> run_baseline(const Dataset& dataset,
                                           const BaselineSpec& spec,
                                           const ModelParams& params, Backend& backend,
                                           const PipelineOptions& options) {
    std::vector<PredictionRecord> records(dataset.items.size());
    const std::string fallback = spec.task.effective_fallback();

    util::parallel_for(dataset.items.size(), options.max_concurrency, [&](std::size_t i) {
        const auto& item = dataset.items[i];
        std::set<Flag> flags;
        Usage usage;
        std::optional<std::string> label;

        ChatRequest request;
        request.system_prompt = spec.system_prompt;
        request.params = params;
        request.tag = {"baseline", -1};
        request.turns.push_back(
            {"task", util::replace_all(spec.task.prompt_template, "{input}", item.text)});

        try {
            ChatResponse response = backend.complete(request);
            usage += response.usage;
            label = parse_label(response.text);
            if (!label) {
                flags.insert(Flag::ParseRetry);
                ChatRequest retry = request;
                retry.turns.push_back({"assistant", "Your previous reply:\n" + response.text});
                retry.turns.push_back({"instruction", classification_clarification(spec.task)});
                ChatResponse second = backend.complete(retry);
                usage += second.usage;
                label = parse_label(second.text);
            }
        } catch (const BackendError&) {
            label.reset();
        }
        if (!label) flags.insert(Flag::ParseFailure);
        records[i] = make_record(item, label.value_or(fallback), std::move(flags),
                                 usage, "");
    });
    return records;
}

std::vector<PredictionRecord> run_mad(const Dataset& dataset, const DebateConfig& config,
                                      const ModelParams& params, Backend& backend,
                                      const PipelineOptions& options) {
    std::vector<PredictionRecord> records(dataset.items.size());
    const std::string fallback = config.task.effective_fallback();

    util::parallel_for(dataset.items.size(), options.max_concurrency, [&](std::size_t i) {
        const auto& item = dataset.items[i];
        EngineOptions engine_options;
        engine_options.params = params;
        engine_options.parallel_phases = options.parallel_phases;
        engine_options.debate_id = item.id;

        try {
            DebateOutcome outcome = run_debate(config, item.text, backend, engine_options);
            std::string ref;
            if (options.transcript_sink) ref = options.transcript_sink(item.id, outcome.transcript);
            std::string predicted = outcome.flags.count(Flag::ParseFailure)
                                        ? fallback
                                        : answer_text(outcome.decision);
            records[i] = make_record(item, std::move(predicted), outcome.flags,
                                     outcome.total_usage, std::move(ref));
        } catch (const DebateAborted& aborted) {
            std::string ref;
            if (options.transcript_sink) ref = options.transcript_sink(item.id, aborted.partial());
            records[i] = make_record(item, fallback, {Flag::ParseFailure},
                                     aborted.partial().total_usage(), std::move(ref));
        }
    });
    return records;
}

void write_predictions_csv(std::ostream& out,
                           const std::vector<PredictionRecord>& records) {
    util::write_csv_row(out, {"id", "predicted", "gold", "correct", "flags",
                              "input_tokens", "output_tokens", "transcript_ref"});
    for (const auto& r : records) {
        std::string flags;
        for (Flag f : r.flags) {
            if (!flags.empty()) flags += ';';
            flags += flag_name(f);
        }
        util::write_csv_row(out, {r.id, r.predicted, r.gold,
                                  r.correct ? "true" : "false", flags,
                                  std::to_string(r.usage.input_tokens),
                                  std::to_string(r.usage.output_tokens),
                                  r.transcript_ref});
    }
}

std::vector<PredictionRecord> read_predictions_csv(std::istream& in) {
    auto rows = util::read_csv(in);
    if (rows.empty()) throw DataError("predictions file is empty");
    const std::vector<std::string> expected = {"id", "predicted", "gold", "correct",
                                               "flags", "input_tokens",
                                               "output_tokens", "transcript_ref"};
    if (rows.front() != expected) {
        throw DataError("predictions file has an unexpected header");
    }
    std::vector<PredictionRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::string where = "predictions row " + std::to_string(i + 1);
        if (row.size() != expected.size()) {
            throw DataError(where + ": expected " + std::to_string(expected.size()) +
                            " fields, got " + std::to_string(row.size()));
        }
        PredictionRecord r;
        r.id = row[0];
        r.predicted = row[1];
        r.gold = row[2];
        if (row[3] == "true") r.correct = true;
        else if (row[3] == "false") r.correct = false;
        else throw DataError(where + ": correct must be true or false");
        if (!row[4].empty()) {
            std::stringstream flags(row[4]);
            std::string token;
            while (std::getline(flags, token, ';')) {
                auto flag = parse_flag(token);
                if (!flag) throw DataError(where + ": unknown flag '" + token + "'");
                r.flags.insert(*flag);
            }
        }
        try {
            r.usage.input_tokens = std::stoll(row[5]);
            r.usage.output_tokens = std::stoll(row[6]);
        } catch (const std::exception&) {
            throw DataError(where + ": token counts must be integers");
        }
        if (r.usage.input_tokens < 0 || r.usage.output_tokens < 0) {
            throw DataError(where + ": token counts must be non-negative");
        }
        r.transcript_ref = row[7];
        bool expected_correct =
            !r.flags.count(Flag::ParseFailure) && r.predicted == r.gold;
        if (r.correct != expected_correct) {
            throw DataError(where + ": correct column is inconsistent with "
                                    "predicted/gold/flags");
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace mad
