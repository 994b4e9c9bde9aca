#include "openresp/metrics.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "openresp/errors.hpp"

namespace openresp {

namespace {

void check_pair(std::span<const int> pred, std::span<const int> truth, const char* what) {
    if (pred.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
    if (pred.size() != truth.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

std::size_t class_index(int score) {
    if (!valid_score(score)) throw std::invalid_argument("score " + std::to_string(score) + " is outside 0..4");
    return static_cast<std::size_t>(score);
}

std::string_view to_string(AucStatistic s) { return s == AucStatistic::closeness ? "closeness" : "indicator"; }
std::string_view to_string(KappaWeighting w) { return w == KappaWeighting::unweighted ? "unweighted" : "quadratic"; }

AucStatistic auc_statistic_from(std::string_view s) {
    if (s == "closeness") return AucStatistic::closeness;
    if (s == "indicator") return AucStatistic::indicator;
    throw DataError("unknown AUC statistic " + std::string(s));
}

KappaWeighting kappa_weighting_from(std::string_view s) {
    if (s == "unweighted") return KappaWeighting::unweighted;
    if (s == "quadratic") return KappaWeighting::quadratic;
    throw DataError("unknown kappa weighting " + std::string(s));
}

} // namespace

double rmse(std::span<const int> pred, std::span<const int> truth) {
    check_pair(pred, truth, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw std::invalid_argument("binary_auc: length mismatch");
    const auto n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (positive[order[k]]) {
                positive_rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("binary_auc: need both positive and negative examples");
    const double p = static_cast<double>(n_pos);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

AucBreakdown macro_ovr_auc_breakdown(std::span<const int> pred, std::span<const int> truth, AucStatistic statistic) {
    check_pair(pred, truth, "macro_ovr_auc");
    AucBreakdown out;
    std::vector<double> scores(pred.size());
    auto labels = std::make_unique<bool[]>(pred.size());
    double total = 0.0;
    std::size_t included = 0;
    for (int c = kMinScore; c <= kMaxScore; ++c) {
        std::size_t positives = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            class_index(pred[i]);
            labels[i] = truth[i] == c;
            positives += labels[i] ? 1 : 0;
            scores[i] = statistic == AucStatistic::closeness ? -std::abs(pred[i] - c) : (pred[i] == c ? 1.0 : 0.0);
        }
        if (positives == 0 || positives == pred.size()) {
            out.skipped_classes.push_back(c);
            continue;
        }
        const double auc = binary_auc(scores, std::span<const bool>(labels.get(), pred.size()));
        out.per_class[static_cast<std::size_t>(c)] = auc;
        total += auc;
        ++included;
    }
    if (included == 0) throw std::invalid_argument("macro_ovr_auc: no score class has both positive and negative examples");
    out.macro = total / static_cast<double>(included);
    return out;
}

double macro_ovr_auc(std::span<const int> pred, std::span<const int> truth, AucStatistic statistic) {
    return macro_ovr_auc_breakdown(pred, truth, statistic).macro;
}

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
    ConfusionMatrix m{};
    for (std::size_t i = 0; i < pred.size(); ++i) ++m[class_index(truth[i])][class_index(pred[i])];
    return m;
}

double cohen_kappa(std::span<const int> pred, std::span<const int> truth, KappaWeighting weighting) {
    check_pair(pred, truth, "cohen_kappa");
    const auto m = confusion_matrix(pred, truth);
    const double n = static_cast<double>(pred.size());
    std::array<double, kScoreClasses> row{}, col{};
    for (std::size_t i = 0; i < kScoreClasses; ++i) {
        for (std::size_t j = 0; j < kScoreClasses; ++j) {
            row[i] += static_cast<double>(m[i][j]);
            col[j] += static_cast<double>(m[i][j]);
        }
    }
    if (weighting == KappaWeighting::unweighted) {
        double agree = 0.0, chance = 0.0;
        for (std::size_t c = 0; c < kScoreClasses; ++c) {
            agree += static_cast<double>(m[c][c]);
            chance += row[c] * col[c];
        }
        if (chance == n * n) return 1.0;
        const double p_o = agree / n;
        const double p_e = chance / (n * n);
        return (p_o - p_e) / (1.0 - p_e);
    }
    const double span = static_cast<double>(kScoreClasses - 1);
    double observed = 0.0, expected = 0.0;
    for (std::size_t i = 0; i < kScoreClasses; ++i) {
        for (std::size_t j = 0; j < kScoreClasses; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / (span * span);
            observed += w * static_cast<double>(m[i][j]) / n;
            expected += w * row[i] * col[j] / (n * n);
        }
    }
    if (expected == 0.0) return 1.0;
    return 1.0 - observed / expected;
}

ScoringReport evaluate_model(std::span<const Prediction> predictions, std::span<const TeacherAnnotation> truth,
                             const EvaluationOptions& options) {
    std::unordered_map<std::string_view, int> teacher;
    for (const auto& a : truth) {
        if (!teacher.emplace(a.response_id, a.score).second) {
            throw DataError("duplicate annotation for response " + a.response_id);
        }
        class_index(a.score);
    }

    ScoringReport report;
    report.auc_statistic = options.auc_statistic;
    report.kappa_weighting = options.kappa_weighting;
    report.n_items = predictions.size();

    std::unordered_set<std::string_view> seen;
    std::vector<int> pred, gold;
    for (const auto& p : predictions) {
        auto it = teacher.find(p.response_id);
        if (it == teacher.end()) throw DataError("prediction for unknown response " + p.response_id);
        if (!seen.insert(p.response_id).second) throw DataError("duplicate prediction for response " + p.response_id);
        if (report.model_id.empty()) report.model_id = p.model_id;
        ++report.true_histogram[static_cast<std::size_t>(it->second)];
        if (!p.ok()) {
            ++report.n_failed;
            continue;
        }
        if (!valid_score(p.scored->score)) throw DataError("prediction for " + p.response_id + " has an invalid score");
        pred.push_back(p.scored->score);
        gold.push_back(it->second);
        ++report.predicted_histogram[static_cast<std::size_t>(p.scored->score)];
    }
    if (seen.size() != teacher.size()) {
        for (const auto& a : truth) {
            if (!seen.contains(a.response_id)) throw DataError("no prediction for response " + a.response_id);
        }
    }
    if (pred.empty()) throw DataError("no successfully parsed predictions to evaluate");

    report.rmse = rmse(pred, gold);
    report.kappa = cohen_kappa(pred, gold, options.kappa_weighting);
    report.confusion = confusion_matrix(pred, gold);
    try {
        const auto auc = macro_ovr_auc_breakdown(pred, gold, options.auc_statistic);
        report.auc = auc.macro;
        report.auc_skipped_classes = auc.skipped_classes;
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("AUC undefined: ") + e.what());
    }
    return report;
}

std::string report_to_json(const ScoringReport& r) {
    nlohmann::ordered_json j;
    j["model_id"] = r.model_id;
    j["n_items"] = r.n_items;
    j["n_failed"] = r.n_failed;
    j["auc"] = r.auc;
    j["rmse"] = r.rmse;
    j["kappa"] = r.kappa;
    j["auc_statistic"] = to_string(r.auc_statistic);
    j["kappa_weighting"] = to_string(r.kappa_weighting);
    j["auc_skipped_classes"] = r.auc_skipped_classes;
    j["confusion"] = r.confusion;
    j["predicted_histogram"] = r.predicted_histogram;
    j["true_histogram"] = r.true_histogram;
    j["metadata"] = {{"dataset_hash", r.metadata.dataset_hash},
                     {"seed", r.metadata.seed},
                     {"provider_ids", r.metadata.provider_ids},
                     {"run_id", r.metadata.run_id}};
    return j.dump(2) + "\n";
}

ScoringReport report_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ScoringReport r;
        r.model_id = j.at("model_id").get<std::string>();
        r.n_items = j.at("n_items").get<std::size_t>();
        r.n_failed = j.at("n_failed").get<std::size_t>();
        r.auc = j.at("auc").get<double>();
        r.rmse = j.at("rmse").get<double>();
        r.kappa = j.at("kappa").get<double>();
        r.auc_statistic = auc_statistic_from(j.value("auc_statistic", std::string("closeness")));
        r.kappa_weighting = kappa_weighting_from(j.value("kappa_weighting", std::string("unweighted")));
        r.auc_skipped_classes = j.value("auc_skipped_classes", std::vector<int>{});
        r.confusion = j.at("confusion").get<ConfusionMatrix>();
        r.predicted_histogram = j.at("predicted_histogram").get<std::array<std::size_t, kScoreClasses>>();
        r.true_histogram = j.at("true_histogram").get<std::array<std::size_t, kScoreClasses>>();
        if (j.contains("metadata")) {
            const auto& m = j["metadata"];
            r.metadata.dataset_hash = m.value("dataset_hash", std::string{});
            r.metadata.seed = m.value("seed", std::uint64_t{0});
            r.metadata.provider_ids = m.value("provider_ids", std::vector<std::string>{});
            r.metadata.run_id = m.value("run_id", std::string{});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed scoring report: ") + e.what());
    }
}

std::string render_performance_table(std::span<const ScoringReport> reports) {
    std::size_t width = 5;
    for (const auto& r : reports) width = std::max(width, r.model_id.size());
    std::string out = fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}\n", "Model", width, "AUC", "RMSE", "Kappa");
    for (const auto& r : reports) {
        out += fmt::format("{:<{}}  {:>6.3f}  {:>6.3f}  {:>6.3f}\n", r.model_id, width, r.auc, r.rmse, r.kappa);
    }
    return out;
}

std::string render_distribution_table(std::span<const ScoringReport> reports) {
    std::string out = fmt::format("{:<6}{:>9}", "Score", "Teacher");
    for (const auto& r : reports) out += fmt::format("  {:>{}}", r.model_id, std::max<std::size_t>(r.model_id.size(), 6));
    out += '\n';
    for (std::size_t c = 0; c < kScoreClasses; ++c) {
        out += fmt::format("{:<6}{:>9}", c, reports.empty() ? 0 : reports.front().true_histogram[c]);
        for (const auto& r : reports) {
            out += fmt::format("  {:>{}}", r.predicted_histogram[c], std::max<std::size_t>(r.model_id.size(), 6));
        }
        out += '\n';
    }
    return out;
}

} // namespace openresp
