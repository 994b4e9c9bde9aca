#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "openresp/config.hpp"
#include "openresp/errors.hpp"
#include "openresp/metrics.hpp"

namespace openresp {

/// Ingest a raw record file: parse, clean, filter.
struct IngestResult {
    Corpus corpus;
    std::vector<Rejection> rejected;
    CleaningReport cleaning;
    FilterResult filter_counts; // corpus member left empty
};

IngestResult ingest(std::string_view raw_jsonl);

/// JSON summary of an ingest run: counts, rejections and unknown entities.
std::string ingest_report_json(const IngestResult& result);

/// Loads a cleaned corpus file, failing (DataError) on any rejected record.
Corpus load_corpus_file(const std::filesystem::path& path);

struct ModelOutcome {
    std::string model_id;
    bool ok = false;
    std::optional<ScoringReport> report;
    std::string error;
    std::filesystem::path predictions_path;
    std::filesystem::path report_path;
};

struct RunResult {
    std::string run_id;
    std::vector<ModelOutcome> models;
    std::filesystem::path manifest_path;
    ExitCode exit_code = ExitCode::success;
};

struct RunOptions {
    bool force = false;
    EnvLookup env;
    Sleeper sleeper;
    std::function<std::string()> clock; // ISO-8601 UTC timestamp source
};

/// Scores the test split with every configured model, evaluates each and
/// writes predictions, reports, a summary table and the run manifest under
/// config.data.out_dir. A failing model is recorded without stopping the
/// others. Exit code: success, partial (some failed) or provider_error (all
/// failed). Throws DataError when the train or test file is missing.
RunResult run_scoring_eval(const Config& config, const RunOptions& options = {});

/// Predictions for the test pairs from one model spec.
std::vector<Prediction> score_with_model(const Config& config, const ModelSpec& model, const Corpus& train,
                                         const Corpus& test, const EnvLookup& env, const Sleeper& sleeper = {});

std::string utc_timestamp();

} // namespace openresp
