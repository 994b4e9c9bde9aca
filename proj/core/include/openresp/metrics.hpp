#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openresp/corpus.hpp"
#include "openresp/prediction.hpp"

namespace openresp {

/// sqrt(mean((pred - truth)^2)). Throws std::invalid_argument on empty or
/// unequal inputs.
double rmse(std::span<const int> pred, std::span<const int> truth);

enum class AucStatistic {
    closeness, // s = -|pred - c|
    indicator, // s = 1 if pred == c else 0
};

struct AucBreakdown {
    double macro = 0.0;
    std::array<std::optional<double>, kScoreClasses> per_class{};
    std::vector<int> skipped_classes; // no positive or no negative example
};

/// Binary AUC for real-valued scores via midranks (Mann-Whitney U). Ties
/// count one half. Requires at least one positive and one negative.
double binary_auc(std::span<const double> scores, std::span<const bool> positive);

/// One-vs-rest AUC per score class, averaged without weights over classes
/// that have both positive and negative ground truth. Throws
/// std::invalid_argument when no class qualifies.
AucBreakdown macro_ovr_auc_breakdown(std::span<const int> pred, std::span<const int> truth,
                                     AucStatistic statistic = AucStatistic::closeness);

double macro_ovr_auc(std::span<const int> pred, std::span<const int> truth,
                     AucStatistic statistic = AucStatistic::closeness);

enum class KappaWeighting { unweighted, quadratic };

using ConfusionMatrix = std::array<std::array<std::size_t, kScoreClasses>, kScoreClasses>;

/// confusion[truth][pred].
ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth);

/// Cohen's kappa over the 5-class confusion matrix. Expected agreement of 1
/// (both raters constant on the same class) yields 1.
double cohen_kappa(std::span<const int> pred, std::span<const int> truth,
                   KappaWeighting weighting = KappaWeighting::unweighted);

struct ReportMetadata {
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::vector<std::string> provider_ids;
    std::string run_id;

    bool operator==(const ReportMetadata&) const = default;
};

struct ScoringReport {
    std::string model_id;
    double auc = 0.0;
    double rmse = 0.0;
    double kappa = 0.0;
    ConfusionMatrix confusion{};
    std::size_t n_items = 0;
    std::size_t n_failed = 0;
    std::array<std::size_t, kScoreClasses> predicted_histogram{};
    std::array<std::size_t, kScoreClasses> true_histogram{};
    std::vector<int> auc_skipped_classes;
    AucStatistic auc_statistic = AucStatistic::closeness;
    KappaWeighting kappa_weighting = KappaWeighting::unweighted;
    ReportMetadata metadata;

    bool operator==(const ScoringReport&) const = default;
};

struct EvaluationOptions {
    AucStatistic auc_statistic = AucStatistic::closeness;
    KappaWeighting kappa_weighting = KappaWeighting::unweighted;
};

/// Aligns predictions with teacher annotations by response_id and computes
/// every metric over the parsed items. Throws DataError for unknown or
/// duplicate response_ids, missing predictions, or when nothing parsed.
ScoringReport evaluate_model(std::span<const Prediction> predictions, std::span<const TeacherAnnotation> truth,
                             const EvaluationOptions& options = {});

std::string report_to_json(const ScoringReport& report);
ScoringReport report_from_json(std::string_view text);

/// Model | AUC | RMSE | Kappa table, one row per report, three decimals.
std::string render_performance_table(std::span<const ScoringReport> reports);

/// Score | Teacher | <model>... counts per score class.
std::string render_distribution_table(std::span<const ScoringReport> reports);

} // namespace openresp
