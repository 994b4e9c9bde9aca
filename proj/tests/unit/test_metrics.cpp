#include <doctest.h>

#include <random>

#include "openresp/errors.hpp"
#include "openresp/metrics.hpp"
#include "oracles.hpp"

using namespace openresp;

TEST_CASE("rmse") {
    const std::vector<int> p{0, 1, 2, 3}, t{0, 1, 2, 3}, u{4, 1, 2, 3};
    CHECK(rmse(p, t) == 0.0);
    CHECK(rmse(u, t) == doctest::Approx(2.0));
    CHECK_THROWS_AS(rmse(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
    CHECK_THROWS_AS(rmse(p, std::vector<int>{1}), std::invalid_argument);
}

TEST_CASE("binary_auc") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const bool pos[] = {false, false, true, true};
    CHECK(binary_auc(s, pos) == doctest::Approx(0.75));
    const std::vector<double> tied{1, 1, 1, 1};
    CHECK(binary_auc(tied, pos) == 0.5);
    const bool none[] = {false, false, false, false};
    CHECK_THROWS_AS(binary_auc(s, none), std::invalid_argument);
}

TEST_CASE("perfect predictions") {
    const std::vector<int> t{0, 1, 2, 3, 4, 4, 2};
    CHECK(macro_ovr_auc(t, t) == 1.0);
    CHECK(cohen_kappa(t, t) == 1.0);
    CHECK(cohen_kappa(t, t, KappaWeighting::quadratic) == 1.0);
    CHECK(rmse(t, t) == 0.0);
}

TEST_CASE("degenerate inputs") {
    const std::vector<int> constant{2, 2, 2};
    CHECK(cohen_kappa(constant, constant) == 1.0);
    CHECK_THROWS_AS(macro_ovr_auc(constant, constant), std::invalid_argument);
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(cohen_kappa(bad, std::vector<int>{1}), std::invalid_argument);
}

TEST_CASE("auc breakdown skips classes without both labels") {
    const std::vector<int> pred{0, 1, 1, 3}, truth{0, 1, 0, 1};
    const auto b = macro_ovr_auc_breakdown(pred, truth);
    CHECK(b.skipped_classes == std::vector<int>{2, 3, 4});
    CHECK(b.per_class[0].has_value());
    CHECK(!b.per_class[2].has_value());
    CHECK(b.macro == doctest::Approx(oracle::macro_auc(pred, truth)));
}

TEST_CASE("metrics agree with brute-force oracles on random data") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng() % 99;
        std::vector<int> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng() % 5);
            pred[i] = rng() % 3 == 0 ? truth[i] : static_cast<int>(rng() % 5);
        }
        CHECK(rmse(pred, truth) == doctest::Approx(oracle::rmse(pred, truth)).epsilon(1e-12));
        CHECK(std::fabs(cohen_kappa(pred, truth) - oracle::kappa(pred, truth)) < 1e-9);
        CHECK(std::fabs(cohen_kappa(pred, truth, KappaWeighting::quadratic) - oracle::quadratic_kappa(pred, truth)) < 1e-9);
        const double expected = oracle::macro_auc(pred, truth);
        if (std::isnan(expected)) {
            CHECK_THROWS(macro_ovr_auc(pred, truth));
        } else {
            CHECK(std::fabs(macro_ovr_auc(pred, truth) - expected) < 1e-9);
            CHECK(std::fabs(macro_ovr_auc(pred, truth, AucStatistic::indicator) - oracle::macro_auc(pred, truth, false)) <
                  1e-9);
        }
    }
}

namespace {

std::vector<Prediction> predictions_for(const std::vector<int>& scores) {
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        Prediction p{"r" + std::to_string(i), "p", "model", std::nullopt, FailureKind::none, {}};
        if (scores[i] >= 0) {
            p.scored = ScoredFeedback{"model", scores[i], "fb", "raw", 0};
        } else {
            p.failure = FailureKind::parse;
            p.error = "bad";
        }
        out.push_back(p);
    }
    return out;
}

std::vector<TeacherAnnotation> truth_for(const std::vector<int>& scores) {
    std::vector<TeacherAnnotation> out;
    for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({"r" + std::to_string(i), scores[i], "", ""});
    return out;
}

} // namespace

TEST_CASE("evaluate_model aligns by response id and excludes failures") {
    const std::vector<int> truth{0, 1, 2, 3, 4, 2};
    const std::vector<int> pred{0, 2, -1, 3, 4, 1};
    auto predictions = predictions_for(pred);
    std::reverse(predictions.begin(), predictions.end());
    const auto report = evaluate_model(predictions, truth_for(truth));
    CHECK(report.model_id == "model");
    CHECK(report.n_items == 6);
    CHECK(report.n_failed == 1);
    const std::vector<int> p_ok{0, 2, 3, 4, 1}, t_ok{0, 1, 3, 4, 2};
    CHECK(report.rmse == doctest::Approx(oracle::rmse(p_ok, t_ok)));
    CHECK(report.kappa == doctest::Approx(oracle::kappa(p_ok, t_ok)));
    CHECK(report.auc == doctest::Approx(oracle::macro_auc(p_ok, t_ok)));
    CHECK(report.predicted_histogram == std::array<std::size_t, 5>{1, 1, 1, 1, 1});
    CHECK(report.true_histogram == std::array<std::size_t, 5>{1, 1, 2, 1, 1});
    CHECK(report.confusion[1][2] == 1);

    const auto text = report_to_json(report);
    CHECK(report_from_json(text) == report);
    CHECK(report_to_json(report_from_json(text)) == text);
}

TEST_CASE("evaluate_model rejects misaligned inputs") {
    const auto truth = truth_for({1, 2, 3});
    CHECK_THROWS_AS(evaluate_model(predictions_for({1, 2}), truth), DataError);
    auto dup = predictions_for({1, 2, 3});
    dup[2].response_id = "r0";
    CHECK_THROWS_AS(evaluate_model(dup, truth), DataError);
    auto unknown = predictions_for({1, 2, 3});
    unknown[0].response_id = "zz";
    CHECK_THROWS_AS(evaluate_model(unknown, truth), DataError);
    CHECK_THROWS_AS(evaluate_model(predictions_for({-1, -1, -1}), truth), DataError);
}

TEST_CASE("tables render one row per model") {
    const auto truth = truth_for({0, 1, 2, 3, 4});
    auto a = evaluate_model(predictions_for({0, 1, 2, 3, 4}), truth);
    auto b = evaluate_model(predictions_for({1, 1, 2, 2, 4}), truth);
    b.model_id = "other";
    const std::vector<ScoringReport> reports{a, b};
    const auto perf = render_performance_table(reports);
    CHECK(perf.find("model") != std::string::npos);
    CHECK(perf.find("other") != std::string::npos);
    CHECK(perf.find("1.000") != std::string::npos);
    const auto dist = render_distribution_table(reports);
    CHECK(dist.find("Teacher") != std::string::npos);
}
