#include "doctest.h"

#include "mad/metrics.hpp"

#include <random>

using namespace mad;

namespace {

std::vector<PredictionRecord> expand_confusion(std::int64_t tp, std::int64_t fn,
                                               std::int64_t fp, std::int64_t tn) {
    std::vector<PredictionRecord> records;
    int next = 0;
    auto add = [&](std::int64_t count, const char* predicted, const char* gold) {
        for (std::int64_t i = 0; i < count; ++i) {
            PredictionRecord r;
            r.id = "x" + std::to_string(next++);
            r.predicted = predicted;
            r.gold = gold;
            r.correct = r.predicted == r.gold;
            records.push_back(std::move(r));
        }
    };
    add(tp, "F", "F");
    add(fn, "NF", "F");
    add(fp, "F", "NF");
    add(tn, "NF", "NF");
    return records;
}

std::vector<PredictionRecord> records_with_correctness(const std::vector<bool>& pattern) {
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        PredictionRecord r;
        r.id = "p" + std::to_string(i);
        r.gold = "F";
        r.predicted = pattern[i] ? "F" : "NF";
        r.correct = pattern[i];
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace

TEST_CASE("metrics on the reconstructed reference confusion matrix") {
    // tp=226 fn=27 fp=143 tn=225 matches the reference baseline row.
    auto records = expand_confusion(226, 27, 143, 225);
    auto report = compute_metrics(records);

    CHECK(report.confusion.support_f() == 253);
    CHECK(report.confusion.support_nf() == 368);
    CHECK(report.confusion.total() == 621);

    // Exact fractions, frozen from integer arithmetic.
    CHECK(report.accuracy == doctest::Approx(451.0 / 621.0).epsilon(1e-12));
    CHECK(report.f_class.precision == doctest::Approx(226.0 / 369.0).epsilon(1e-12));
    CHECK(report.f_class.recall == doctest::Approx(226.0 / 253.0).epsilon(1e-12));
    CHECK(report.f_class.f1 == doctest::Approx(452.0 / 622.0).epsilon(1e-12));
    CHECK(report.nf_class.precision == doctest::Approx(225.0 / 252.0).epsilon(1e-12));
    CHECK(report.nf_class.recall == doctest::Approx(225.0 / 368.0).epsilon(1e-12));
    CHECK(report.nf_class.f1 == doctest::Approx(450.0 / 620.0).epsilon(1e-12));

    // Reference row values, within display rounding.
    CHECK(report.accuracy == doctest::Approx(0.726).epsilon(0.002 / 0.726));
    CHECK(report.f_class.precision == doctest::Approx(0.613).epsilon(0.002 / 0.613));
    CHECK(report.f_class.recall == doctest::Approx(0.893).epsilon(0.002 / 0.893));
    CHECK(report.f_class.f1 == doctest::Approx(0.727).epsilon(0.002 / 0.727));
    CHECK(report.nf_class.precision == doctest::Approx(0.893).epsilon(0.002 / 0.893));
    CHECK(report.nf_class.recall == doctest::Approx(0.611).epsilon(0.002 / 0.611));
    CHECK(report.nf_class.f1 == doctest::Approx(0.726).epsilon(0.002 / 0.726));
    CHECK(report.weighted_precision == doctest::Approx(0.779).epsilon(0.002 / 0.779));
    CHECK(report.weighted_recall == doctest::Approx(report.accuracy).epsilon(1e-12));
    CHECK(report.weighted_f1 == doctest::Approx(0.726).epsilon(0.002 / 0.726));
}

TEST_CASE("a perfect classifier scores 1.0 everywhere") {
    auto report = compute_metrics(expand_confusion(5, 0, 0, 7));
    CHECK(report.accuracy == 1.0);
    CHECK(report.f_class.precision == 1.0);
    CHECK(report.f_class.recall == 1.0);
    CHECK(report.f_class.f1 == 1.0);
    CHECK(report.nf_class.precision == 1.0);
    CHECK(report.nf_class.recall == 1.0);
    CHECK(report.nf_class.f1 == 1.0);
    CHECK(report.weighted_f1 == 1.0);
}

TEST_CASE("all-F predictions: closed form from the supports") {
    auto report = compute_metrics(expand_confusion(253, 0, 368, 0));
    CHECK(report.f_class.recall == 1.0);
    CHECK(report.nf_class.recall == 0.0);
    CHECK(report.accuracy == doctest::Approx(253.0 / 621.0).epsilon(1e-12));
    CHECK(report.nf_class.precision == 0.0);  // tn + fn = 0
    CHECK(report.nf_class.zero_denominator);
}

TEST_CASE("compute_metrics rejects empty input and foreign labels") {
    CHECK_THROWS_AS(compute_metrics({}), DataError);
    PredictionRecord r;
    r.id = "z";
    r.predicted = "YES";
    r.gold = "F";
    CHECK_THROWS_AS(compute_metrics({r}), DataError);
}

TEST_CASE("parse failures count against the gold class") {
    // Two records, both textually 'correct' predictions, one flagged.
    auto records = expand_confusion(2, 0, 0, 0);
    records[1].flags.insert(Flag::ParseFailure);
    records[1].correct = false;
    auto report = compute_metrics(records);
    CHECK(report.confusion.tp == 1);
    CHECK(report.confusion.fn == 1);  // flagged record lands in the miss cell
    CHECK(report.parse_failures == 1);
    CHECK(report.accuracy == doctest::Approx(0.5));
}

TEST_CASE("weighted recall equals accuracy on random exhaustive predictions") {
    std::mt19937 rng(5150);
    for (int trial = 0; trial < 300; ++trial) {
        std::int64_t tp = rng() % 40;
        std::int64_t fn = rng() % 40;
        std::int64_t fp = rng() % 40;
        std::int64_t tn = rng() % 40;
        if (tp + fn == 0) tp = 1;
        if (fp + tn == 0) tn = 1;
        auto report = compute_metrics(expand_confusion(tp, fn, fp, tn));
        CHECK(report.weighted_recall == doctest::Approx(report.accuracy).epsilon(1e-12));
        // F1 sits between precision and recall when both denominators exist.
        auto check_f1 = [](const ClassMetrics& m) {
            if (m.zero_denominator) return;
            CHECK(m.f1 >= doctest::Approx(std::min(m.precision, m.recall)).epsilon(1e-12));
            CHECK(m.f1 <= doctest::Approx(std::max(m.precision, m.recall)).epsilon(1e-12));
        };
        check_f1(report.f_class);
        check_f1(report.nf_class);
    }
}

TEST_CASE("mcnemar matches the reference p-values") {
    // Reference values computed with an independent chi-square(1) upper-tail
    // oracle (scipy.stats.chi2.sf), frozen here.
    auto r1 = mcnemar({0, 71, 15, 0});
    CHECK(r1.statistic == doctest::Approx(35.174418604651166).epsilon(1e-12));
    CHECK(r1.p_value == doctest::Approx(3.0145759627591477e-09).epsilon(1e-9));
    CHECK(r1.p_value > 2.5e-9);
    CHECK(r1.p_value < 3.5e-9);

    auto r2 = mcnemar({0, 75, 14, 0});
    CHECK(r2.statistic == doctest::Approx(40.449438202247194).epsilon(1e-12));
    CHECK(r2.p_value == doctest::Approx(2.0177045732527432e-10).epsilon(1e-9));
    CHECK(r2.p_value > 1.5e-10);
    CHECK(r2.p_value < 2.5e-10);
}

TEST_CASE("mcnemar edge and reference cases") {
    auto even = mcnemar({0, 5, 5, 0});
    CHECK(even.statistic == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(even.p_value == doctest::Approx(0.7518296340458492).epsilon(1e-12));

    auto none = mcnemar({10, 0, 0, 3});
    CHECK(none.statistic == 0.0);
    CHECK(none.p_value == 1.0);

    // |b-c| <= 1 zeroes the corrected statistic.
    auto close = mcnemar({0, 3, 2, 0});
    CHECK(close.statistic == 0.0);
    CHECK(close.p_value == 1.0);

    auto one_sided = mcnemar({0, 10, 0, 0});
    CHECK(one_sided.statistic == doctest::Approx(8.1).epsilon(1e-12));
    CHECK(one_sided.p_value == doctest::Approx(0.004426525857919833).epsilon(1e-9));
}

TEST_CASE("mcnemar variants for sensitivity analysis") {
    auto uncorrected = mcnemar({0, 71, 15, 0}, McNemarVariant::Uncorrected);
    CHECK(uncorrected.statistic == doctest::Approx(36.46511627906977).epsilon(1e-12));
    CHECK(uncorrected.p_value == doctest::Approx(1.5542307699991917e-09).epsilon(1e-9));
    CHECK(mcnemar({0, 5, 5, 0}, McNemarVariant::Uncorrected).p_value == 1.0);

    // Exact binomial oracle values from scipy.stats.binom.
    auto exact = mcnemar({0, 71, 15, 0}, McNemarVariant::ExactBinomial);
    CHECK(exact.p_value == doctest::Approx(7.076057190944836e-10).epsilon(1e-6));
    CHECK(mcnemar({0, 5, 5, 0}, McNemarVariant::ExactBinomial).p_value == 1.0);
    CHECK(mcnemar({0, 10, 0, 0}, McNemarVariant::ExactBinomial).p_value ==
          doctest::Approx(0.001953125).epsilon(1e-12));
}

TEST_CASE("mcnemar is symmetric in b and c") {
    for (std::int64_t b = 0; b <= 12; ++b) {
        for (std::int64_t c = 0; c <= 12; ++c) {
            for (auto variant : {McNemarVariant::ContinuityCorrected,
                                 McNemarVariant::Uncorrected,
                                 McNemarVariant::ExactBinomial}) {
                auto forward = mcnemar({0, b, c, 0}, variant);
                auto backward = mcnemar({0, c, b, 0}, variant);
                CHECK(forward.statistic == backward.statistic);
                CHECK(forward.p_value == backward.p_value);
            }
        }
    }
}

TEST_CASE("p-value is non-increasing in |b - c| at fixed b + c") {
    for (std::int64_t total : {6, 11, 40, 87}) {
        double previous = 2.0;
        for (std::int64_t b = (total + 1) / 2; b <= total; ++b) {
            auto result = mcnemar({0, b, total - b, 0});
            CHECK(result.p_value <= previous + 1e-15);
            previous = result.p_value;
        }
    }
}

TEST_CASE("pair_predictions joins on id") {
    auto run = records_with_correctness({true, true, false, true});
    auto same = pair_predictions(run, run);
    CHECK(same.b == 0);
    CHECK(same.c == 0);
    CHECK(same.a == 3);
    CHECK(same.d == 1);
    CHECK(same.total() == 4);

    auto all_right = records_with_correctness(std::vector<bool>(10, true));
    auto all_wrong = records_with_correctness(std::vector<bool>(10, false));
    auto extremes = pair_predictions(all_right, all_wrong);
    CHECK(extremes.b == 10);
    CHECK(extremes.c == 0);

    // An engineered split reproduces a chosen (b, c) exactly.
    std::vector<bool> first(20, false);
    std::vector<bool> second(20, false);
    for (int i = 0; i < 7; ++i) first[static_cast<std::size_t>(i)] = true;       // b
    for (int i = 7; i < 10; ++i) second[static_cast<std::size_t>(i)] = true;     // c
    for (int i = 10; i < 14; ++i) {                                              // a
        first[static_cast<std::size_t>(i)] = second[static_cast<std::size_t>(i)] = true;
    }
    auto chosen = pair_predictions(records_with_correctness(first),
                                   records_with_correctness(second));
    CHECK(chosen.a == 4);
    CHECK(chosen.b == 7);
    CHECK(chosen.c == 3);
    CHECK(chosen.d == 6);
}

TEST_CASE("pair_predictions rejects mismatched inputs") {
    auto run_a = records_with_correctness({true, false});
    auto run_b = records_with_correctness({true, false, true});
    CHECK_THROWS_WITH_AS(pair_predictions(run_a, run_b), doctest::Contains("p2"),
                         DataError);

    auto dup = run_a;
    dup.push_back(dup.front());
    CHECK_THROWS_AS(pair_predictions(dup, dup), DataError);

    auto gold_flip = run_a;
    gold_flip[0].gold = "NF";
    gold_flip[0].predicted = "NF";
    CHECK_THROWS_WITH_AS(pair_predictions(run_a, gold_flip),
                         doctest::Contains("gold"), DataError);
}

TEST_CASE("usage_report sums exactly and prices the totals") {
    PriceTable prices{2.50, 10.00, 1.0, "EUR"};
    std::vector<PredictionRecord> records(3);
    records[0].usage = {100, 10};
    records[1].usage = {152'045, 8'684};
    records[2].usage = {0, 0};
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].id = "u" + std::to_string(i);
        records[i].predicted = records[i].gold = "F";
        records[i].correct = true;
    }
    auto report = usage_report(records, prices, 6840.0);
    CHECK(report.input_tokens == 152'145);
    CHECK(report.output_tokens == 8'694);
    CHECK(report.total_tokens == 160'839);
    CHECK(report.cost == doctest::Approx(0.4673025).epsilon(1e-9));
    CHECK(report.items == 3);

    auto empty = usage_report({}, prices, 0.0);
    CHECK(empty.input_tokens == 0);
    CHECK(empty.output_tokens == 0);
    CHECK(empty.total_tokens == 0);
    CHECK(empty.cost == 0.0);
}

TEST_CASE("display formatting") {
    CHECK(format_metric(0.7262479871) == "0.726");
    CHECK(format_metric(1.0) == "1.000");
    CHECK(format_p_value(3.0145759627591477e-09) == "3.0e-09");
    CHECK(format_p_value(2.0177045732527432e-10) == "2.0e-10");
    CHECK(format_p_value(1.0) == "1.0e+00");
}

TEST_CASE("rendered tables carry the headline numbers") {
    auto report = compute_metrics(expand_confusion(226, 27, 143, 225));
    auto table = render_metrics_table(report);
    CHECK(table.find("0.726") != std::string::npos);
    CHECK(table.find("0.779") != std::string::npos);
    CHECK(table.find("Total") != std::string::npos);

    auto comparison = render_comparison({500, 71, 15, 35}, mcnemar({500, 71, 15, 35}));
    CHECK(comparison.find("71") != std::string::npos);
    CHECK(comparison.find("3.0e-09") != std::string::npos);

    UsageReport n0;
    n0.input_tokens = 1'068'517;
    n0.output_tokens = 453'126;
    n0.total_tokens = 1'521'643;
    n0.cost = 7.2;
    n0.currency = "EUR";
    n0.wall_seconds = 6.4 * 3600;
    UsageReport n1 = n0;
    n1.input_tokens *= 2;
    n1.output_tokens *= 2;
    n1.total_tokens *= 2;
    auto usage = render_usage_table({{"mad_n0", n0}, {"mad_n1", n1}});
    CHECK(usage.find("1,068,517") != std::string::npos);
    CHECK(usage.find("6.4 h") != std::string::npos);
    CHECK(usage.find("exactly 2x") != std::string::npos);
}
