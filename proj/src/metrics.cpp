#include "mad/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace mad {

namespace {

void check_binary_labels(const PredictionRecord& r) {
    auto ok = [](const std::string& l) { return l == "F" || l == "NF"; };
    if (!ok(r.predicted) || !ok(r.gold)) {
        throw DataError("record '" + r.id + "' has labels outside {F, NF}: predicted='" +
                        r.predicted + "', gold='" + r.gold + "'");
    }
}

double ratio(std::int64_t numerator, std::int64_t denominator, bool* zero_flag) {
    if (denominator == 0) {
        if (zero_flag) *zero_flag = true;
        return 0.0;
    }
    return static_cast<double>(numerator) / static_cast<double>(denominator);
}

double harmonic_f1(double precision, double recall, bool* zero_flag) {
    if (precision + recall == 0.0) {
        if (zero_flag) *zero_flag = true;
        return 0.0;
    }
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

ConfusionMatrix confusion_from(const std::vector<PredictionRecord>& records) {
    ConfusionMatrix cm;
    for (const auto& r : records) {
        check_binary_labels(r);
        // A parse failure is conservatively a miss for its gold class.
        std::string effective = r.predicted;
        if (r.flags.count(Flag::ParseFailure)) {
            effective = r.gold == "F" ? "NF" : "F";
        }
        if (r.gold == "F") {
            (effective == "F" ? cm.tp : cm.fn) += 1;
        } else {
            (effective == "F" ? cm.fp : cm.tn) += 1;
        }
    }
    return cm;
}

MetricsReport compute_metrics(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw DataError("cannot compute metrics over zero predictions");

    MetricsReport report;
    report.confusion = confusion_from(records);
    const ConfusionMatrix& cm = report.confusion;

    report.f_class.precision = ratio(cm.tp, cm.tp + cm.fp, &report.f_class.zero_denominator);
    report.f_class.recall = ratio(cm.tp, cm.support_f(), &report.f_class.zero_denominator);
    report.f_class.f1 = harmonic_f1(report.f_class.precision, report.f_class.recall,
                                    &report.f_class.zero_denominator);

    report.nf_class.precision = ratio(cm.tn, cm.tn + cm.fn, &report.nf_class.zero_denominator);
    report.nf_class.recall = ratio(cm.tn, cm.support_nf(), &report.nf_class.zero_denominator);
    report.nf_class.f1 = harmonic_f1(report.nf_class.precision, report.nf_class.recall,
                                     &report.nf_class.zero_denominator);

    const double total = static_cast<double>(cm.total());
    const double wf = static_cast<double>(cm.support_f());
    const double wn = static_cast<double>(cm.support_nf());
    report.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
    report.weighted_precision =
        (wf * report.f_class.precision + wn * report.nf_class.precision) / total;
    report.weighted_recall =
        (wf * report.f_class.recall + wn * report.nf_class.recall) / total;
    report.weighted_f1 = (wf * report.f_class.f1 + wn * report.nf_class.f1) / total;

    for (const auto& r : records) {
        if (r.flags.count(Flag::ParseFailure)) ++report.parse_failures;
        if (r.flags.count(Flag::ParseRetry)) ++report.parse_retries;
        if (r.flags.count(Flag::TieBroken)) ++report.ties_broken;
    }
    return report;
}

McNemarResult mcnemar(const ContingencyTable& table, McNemarVariant variant) {
    McNemarResult result;
    const double b = static_cast<double>(table.b);
    const double c = static_cast<double>(table.c);
    const double n = b + c;
    if (n == 0.0) {
        result.statistic = 0.0;
        result.p_value = 1.0;
        return result;
    }
    switch (variant) {
        case McNemarVariant::ContinuityCorrected: {
            double diff = std::abs(b - c) - 1.0;
            result.statistic = diff * diff / n;
            break;
        }
        case McNemarVariant::Uncorrected: {
            double diff = b - c;
            result.statistic = diff * diff / n;
            break;
        }
        case McNemarVariant::ExactBinomial: {
            // Two-sided tail of Bin(b+c, 1/2) from max(b, c).
            const std::int64_t total = table.b + table.c;
            const std::int64_t k = std::max(table.b, table.c);
            double tail = 0.0;
            for (std::int64_t i = k; i <= total; ++i) {
                double log_pmf = std::lgamma(static_cast<double>(total) + 1.0) -
                                 std::lgamma(static_cast<double>(i) + 1.0) -
                                 std::lgamma(static_cast<double>(total - i) + 1.0) -
                                 static_cast<double>(total) * std::log(2.0);
                tail += std::exp(log_pmf);
            }
            result.statistic = 0.0;
            result.p_value = std::min(1.0, 2.0 * tail);
            return result;
        }
    }
    // Upper tail of chi-square with 1 degree of freedom.
    result.p_value = std::erfc(std::sqrt(result.statistic / 2.0));
    return result;
}

ContingencyTable pair_predictions(const std::vector<PredictionRecord>& first,
                                  const std::vector<PredictionRecord>& second) {
    auto index = [](const std::vector<PredictionRecord>& records, const char* which) {
        std::map<std::string, const PredictionRecord*> by_id;
        for (const auto& r : records) {
            if (!by_id.emplace(r.id, &r).second) {
                throw DataError(std::string("duplicate id '") + r.id + "' in " + which +
                                " run");
            }
        }
        return by_id;
    };
    auto a_ids = index(first, "first");
    auto b_ids = index(second, "second");

    std::vector<std::string> missing;
    for (const auto& [id, _] : a_ids) {
        if (!b_ids.count(id)) missing.push_back(id + " (only in first)");
    }
    for (const auto& [id, _] : b_ids) {
        if (!a_ids.count(id)) missing.push_back(id + " (only in second)");
    }
    if (!missing.empty()) {
        std::string listed;
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
            if (i) listed += ", ";
            listed += missing[i];
        }
        if (missing.size() > 10) listed += ", ...";
        throw DataError("prediction id sets differ: " + listed);
    }

    ContingencyTable table;
    for (const auto& [id, ra] : a_ids) {
        const PredictionRecord* rb = b_ids.at(id);
        if (ra->gold != rb->gold) {
            throw DataError("gold labels disagree for id '" + id + "'");
        }
        if (ra->correct && rb->correct) ++table.a;
        else if (ra->correct) ++table.b;
        else if (rb->correct) ++table.c;
        else ++table.d;
    }
    return table;
}

UsageReport usage_report(const std::vector<PredictionRecord>& records,
                         const PriceTable& prices, double wall_seconds) {
    UsageReport report;
    Usage totals;
    for (const auto& r : records) totals += r.usage;
    report.input_tokens = totals.input_tokens;
    report.output_tokens = totals.output_tokens;
    report.total_tokens = totals.total();
    report.cost = estimate_cost(totals, prices);
    report.currency = prices.currency;
    report.wall_seconds = wall_seconds;
    report.items = records.size();
    return report;
}

std::string format_metric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    return buf;
}

std::string format_p_value(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1e", value);
    return buf;
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
    if (s.size() >= width) return s + "  ";
    return s + std::string(width - s.size(), ' ') + "  ";
}

std::string format_duration(double seconds) {
    char buf[32];
    if (seconds < 120.0) {
        std::snprintf(buf, sizeof buf, "%.1f s", seconds);
    } else if (seconds < 7200.0) {
        std::snprintf(buf, sizeof buf, "%.1f min", seconds / 60.0);
    } else {
        std::snprintf(buf, sizeof buf, "%.1f h", seconds / 3600.0);
    }
    return buf;
}

std::string group_thousands(std::int64_t value) {
    std::string digits = std::to_string(value);
    std::string out;
    int count = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (count && count % 3 == 0 && *it != '-') out += ',';
        out += *it;
        ++count;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace

std::string render_metrics_table(const MetricsReport& report) {
    std::ostringstream out;
    out << pad("Class", 8) << pad("Accuracy", 8) << pad("Precision", 9)
        << pad("Recall", 8) << "F1-score\n";
    auto row = [&](const std::string& name, const std::string& accuracy,
                   const ClassMetrics& m) {
        out << pad(name, 8) << pad(accuracy, 8) << pad(format_metric(m.precision), 9)
            << pad(format_metric(m.recall), 8) << format_metric(m.f1) << '\n';
    };
    row("F", "-", report.f_class);
    row("NF", "-", report.nf_class);
    out << pad("Total", 8) << pad(format_metric(report.accuracy), 8)
        << pad(format_metric(report.weighted_precision), 9)
        << pad(format_metric(report.weighted_recall), 8)
        << format_metric(report.weighted_f1) << '\n';
    out << "support: F=" << report.confusion.support_f()
        << " NF=" << report.confusion.support_nf()
        << " total=" << report.confusion.total() << '\n';
    if (report.parse_failures || report.parse_retries || report.ties_broken) {
        out << "flags: parse_failures=" << report.parse_failures
            << " parse_retries=" << report.parse_retries
            << " ties_broken=" << report.ties_broken
            << " (parse failures count as misclassified)\n";
    }
    if (report.f_class.zero_denominator || report.nf_class.zero_denominator) {
        out << "note: zero-denominator metrics reported as 0\n";
    }
    return out.str();
}

std::string render_comparison(const ContingencyTable& table, const McNemarResult& result) {
    std::ostringstream out;
    out << pad("a", 10) << pad("b", 10) << pad("c", 10) << pad("d", 10)
        << pad("statistic", 10) << "p-value\n";
    out << pad(std::to_string(table.a), 10) << pad(std::to_string(table.b), 10)
        << pad(std::to_string(table.c), 10) << pad(std::to_string(table.d), 10)
        << pad(format_metric(result.statistic), 10) << format_p_value(result.p_value)
        << '\n';
    out << "b: first run correct, second wrong; c: second run correct, first wrong\n";
    return out.str();
}

std::string render_usage_table(
    const std::vector<std::pair<std::string, UsageReport>>& rows) {
    std::ostringstream out;
    out << pad("Run", 16) << pad("I-Tokens", 12) << pad("O-Tokens", 12)
        << pad("Tokens", 12) << pad("Cost", 12) << "Time\n";
    for (const auto& [name, report] : rows) {
        out << pad(name, 16) << pad(group_thousands(report.input_tokens), 12)
            << pad(group_thousands(report.output_tokens), 12)
            << pad(group_thousands(report.total_tokens), 12)
            << pad(format_cost(report.cost) + " " + report.currency, 12)
            << format_duration(report.wall_seconds) << '\n';
    }
    // Exactly doubled totals usually mean extrapolated rather than measured
    // numbers; point them out, nothing more.
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (i == j) continue;
            const auto& x = rows[i].second;
            const auto& y = rows[j].second;
            if (x.total_tokens != 0 && y.total_tokens == 2 * x.total_tokens &&
                y.input_tokens == 2 * x.input_tokens &&
                y.output_tokens == 2 * x.output_tokens) {
                out << "note: totals of '" << rows[j].first << "' are exactly 2x '"
                    << rows[i].first << "'\n";
            }
        }
    }
    return out.str();
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["confusion"] = {{"tp", report.confusion.tp},
                      {"fn", report.confusion.fn},
                      {"fp", report.confusion.fp},
                      {"tn", report.confusion.tn}};
    auto class_json = [](const ClassMetrics& m) {
        return nlohmann::ordered_json{{"precision", m.precision},
                                      {"recall", m.recall},
                                      {"f1", m.f1},
                                      {"zero_denominator", m.zero_denominator}};
    };
    j["f"] = class_json(report.f_class);
    j["nf"] = class_json(report.nf_class);
    j["accuracy"] = report.accuracy;
    j["weighted"] = {{"precision", report.weighted_precision},
                     {"recall", report.weighted_recall},
                     {"f1", report.weighted_f1}};
    j["support"] = {{"f", report.confusion.support_f()},
                    {"nf", report.confusion.support_nf()}};
    j["flags"] = {{"parse_failures", report.parse_failures},
                  {"parse_retries", report.parse_retries},
                  {"ties_broken", report.ties_broken}};
    return j.dump(2);
}

}  // namespace mad
