#pragma once

#include "mad/backend.hpp"
#include "mad/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mad {

/// F is the positive class.
struct ConfusionMatrix {
    std::int64_t tp = 0;  // predicted F, gold F
    std::int64_t fn = 0;  // predicted NF, gold F
    std::int64_t fp = 0;  // predicted F, gold NF
    std::int64_t tn = 0;  // predicted NF, gold NF

    std::int64_t support_f() const { return tp + fn; }
    std::int64_t support_nf() const { return fp + tn; }
    std::int64_t total() const { return tp + fn + fp + tn; }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_denominator = false;  // some metric was 0 by convention
};

struct MetricsReport {
    ConfusionMatrix confusion;
    ClassMetrics f_class;
    ClassMetrics nf_class;
    double accuracy = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;  // equals accuracy when every item is predicted
    double weighted_f1 = 0.0;
    std::int64_t parse_failures = 0;
    std::int64_t parse_retries = 0;
    std::int64_t ties_broken = 0;
};

ConfusionMatrix confusion_from(const std::vector<PredictionRecord>& records);

/// Correctness report over a finished run. Records flagged ParseFailure count
/// as misclassified: they land in the wrong cell for their gold class. Zero
/// denominators yield 0 with the class's zero_denominator flag set.
/// Throws DataError for an empty record list or labels outside {F, NF}.
MetricsReport compute_metrics(const std::vector<PredictionRecord>& records);

struct ContingencyTable {
    std::int64_t a = 0;  // both runs correct
    std::int64_t b = 0;  // first run correct, second wrong
    std::int64_t c = 0;  // second run correct, first wrong
    std::int64_t d = 0;  // both wrong

    std::int64_t total() const { return a + b + c + d; }
};

enum class McNemarVariant {
    ContinuityCorrected,  // (|b-c| - 1)^2 / (b+c); reproduces the reference p-values
    Uncorrected,          // (b-c)^2 / (b+c)
    ExactBinomial,        // two-sided binomial tail, for sensitivity checks
};

struct McNemarResult {
    double statistic = 0.0;  // 0 for the exact-binomial variant
    double p_value = 1.0;
};

/// Paired McNemar test over the disagreement counts. b+c = 0 gives
/// statistic 0 and p = 1. The chi-square(1) upper tail is computed as
/// erfc(sqrt(statistic / 2)).
McNemarResult mcnemar(const ContingencyTable& table,
                      McNemarVariant variant = McNemarVariant::ContinuityCorrected);

/// Joins two runs on id (b counts items only the first run got right).
/// Throws DataError listing offending ids when the id sets differ, and when
/// gold labels disagree for the same id.
ContingencyTable pair_predictions(const std::vector<PredictionRecord>& first,
                                  const std::vector<PredictionRecord>& second);

struct UsageReport {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t total_tokens = 0;
    double cost = 0.0;
    std::string currency;
    double wall_seconds = 0.0;
    std::size_t items = 0;
};

/// Exact integer token sums over the records; cost via estimate_cost.
UsageReport usage_report(const std::vector<PredictionRecord>& records,
                         const PriceTable& prices, double wall_seconds);

// Display formatting. Machine-readable output keeps full precision; these
// are for the aligned stdout tables.
std::string format_metric(double value);   // 3 decimals
std::string format_p_value(double value);  // 2 significant figures

std::string render_metrics_table(const MetricsReport& report);
std::string render_comparison(const ContingencyTable& table, const McNemarResult& result);
std::string render_usage_table(const std::vector<std::pair<std::string, UsageReport>>& rows);

std::string metrics_to_json(const MetricsReport& report);

}  // namespace mad
