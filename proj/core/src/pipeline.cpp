#include "openresp/pipeline.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cctype>
#include <ctime>

#include "openresp/io.hpp"
#include "openresp/similarity.hpp"

namespace openresp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string file_stem_for(std::string_view model_id) {
    std::string out;
    for (char c : model_id) {
        const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out += keep ? c : '_';
    }
    return out;
}

std::string endpoint_of(const Config& config, const ModelSpec& model) {
    if (model.kind == ModelKind::knn) return config.embedding.endpoint;
    return model.endpoint.empty() ? config.completion.endpoint : model.endpoint;
}

std::vector<Prediction> score_knn(const Config& config, const ModelSpec& model, const Corpus& train,
                                  const std::vector<GradedResponse>& pairs, const EnvLookup& env,
                                  const Sleeper& sleeper) {
    auto embedder = make_embedding_provider(config, env, sleeper);
    const auto history = train.graded();
    const auto index = SimilarityIndex::build(history, *embedder, config.embedding.batch_size);

    std::vector<Prediction> out;
    out.reserve(pairs.size());
    const std::size_t batch = config.embedding.batch_size;
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
        const std::size_t end = std::min(pairs.size(), start + batch);
        std::vector<std::string> texts;
        for (std::size_t i = start; i < end; ++i) texts.push_back(pairs[i].response.answer);

        std::vector<EmbeddingVector> vectors;
        std::string batch_error;
        try {
            vectors = embedder->embed_batch(texts);
        } catch (const ProviderError& e) {
            batch_error = e.what();
        }
        for (std::size_t i = start; i < end; ++i) {
            const auto& r = pairs[i].response;
            Prediction p{r.response_id, r.problem_id, model.id, std::nullopt, FailureKind::none, {}};
            if (!batch_error.empty()) {
                p.failure = FailureKind::provider;
                p.error = batch_error;
            } else {
                try {
                    const auto hit = index.nearest(r.problem_id, vectors[i - start]);
                    p.scored = ScoredFeedback{model.id, hit.predicted_score, hit.predicted_feedback,
                                              fmt::format("match={} distance={:.17g}", hit.matched_response_id, hit.distance),
                                              0};
                } catch (const DataError& e) {
                    p.failure = FailureKind::data;
                    p.error = e.what();
                }
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<Prediction> score_llm(const Config& config, const ModelSpec& model, const Corpus& test,
                                  const std::vector<GradedResponse>& pairs, const EnvLookup& env,
                                  const Sleeper& sleeper) {
    auto provider = make_completion_provider(config, model, env, sleeper);
    LlmScorerOptions options;
    options.model_id = model.id;
    options.mode = model.mode;
    options.parse_retries = config.completion.parse_retries;
    LlmScorer scorer(std::move(provider), Rubric::illustrative_math(), std::move(options));

    std::vector<ScoringItem> items;
    items.reserve(pairs.size());
    for (const auto& g : pairs) {
        const auto* problem = test.find_problem(g.response.problem_id);
        if (!problem) throw DataError("test response " + g.response.response_id + " references unknown problem");
        items.push_back({g.response.response_id, problem, g.response.answer});
    }
    return scorer.predict_batch(items, model.params.value_or(config.completion.params));
}

std::string provider_id(const Config& config, const ModelSpec& model, const EnvLookup& env) {
    if (model.kind == ModelKind::knn) return "embedding:" + make_embedding_provider(config, env)->id();
    return "completion:" + endpoint_of(config, model) + "/" + std::string(to_string(model.mode));
}

ordered_json artifact_entry(const std::filesystem::path& root, const std::filesystem::path& file) {
    return {{"path", std::filesystem::relative(file, root).generic_string()}, {"sha256", io::sha256_file(file)}};
}

// Writes the manifest unless an existing one differs only in created_at.
void write_manifest(const std::filesystem::path& path, ordered_json manifest, bool force) {
    if (std::filesystem::exists(path)) {
        try {
            auto existing = nlohmann::ordered_json::parse(io::read_file(path));
            auto a = existing;
            auto b = manifest;
            a.erase("created_at");
            b.erase("created_at");
            if (a == b) return;
        } catch (const nlohmann::json::exception&) {
        }
    }
    io::write_artifact(path, manifest.dump(2) + "\n", force);
}

// Settings that shape the results plus the data content; file locations and
// serving options do not change the id.
std::string run_id_for(const Config& config, const std::string& dataset_hash) {
    auto doc = nlohmann::json::parse(config.snapshot);
    doc.erase("data");
    doc.erase("serve");
    return io::sha256_hex(doc.dump() + "\n" + dataset_hash).substr(0, 16);
}

} // namespace

IngestResult ingest(std::string_view raw_jsonl) {
    auto parsed = parse_corpus(raw_jsonl);
    auto filtered = filter_corpus(parsed.corpus);
    IngestResult result;
    result.corpus = std::move(filtered.corpus);
    result.rejected = std::move(parsed.rejected);
    result.cleaning = std::move(parsed.cleaning);
    result.filter_counts = std::move(filtered);
    return result;
}

std::string ingest_report_json(const IngestResult& result) {
    ordered_json j;
    j["problems"] = result.corpus.problems.size();
    j["responses"] = result.corpus.responses.size();
    j["annotations"] = result.corpus.annotations.size();
    j["filtered"] = {{"image_problems", result.filter_counts.image_problems_removed},
                     {"responses_of_image_problems", result.filter_counts.responses_of_image_problems_removed},
                     {"image_responses", result.filter_counts.image_responses_removed},
                     {"annotations", result.filter_counts.annotations_removed}};
    auto rejected = ordered_json::array();
    for (const auto& r : result.rejected) {
        rejected.push_back({{"line", r.line}, {"record_type", r.record_type}, {"id", r.id}, {"reason", r.reason}});
    }
    j["rejected"] = std::move(rejected);
    j["unknown_entities"] = result.cleaning.unknown_entities;
    j["score_distribution"] = score_distribution(result.corpus.annotations);
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

Corpus load_corpus_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw DataError("corpus file not found: " + path.string());
    auto parsed = parse_corpus(io::read_file(path));
    if (!parsed.rejected.empty()) {
        const auto& r = parsed.rejected.front();
        throw DataError(fmt::format("{}: {} rejected record(s); first at line {}: {}", path.string(), parsed.rejected.size(),
                                    r.line, r.reason));
    }
    return std::move(parsed.corpus);
}

std::vector<Prediction> score_with_model(const Config& config, const ModelSpec& model, const Corpus& train,
                                         const Corpus& test, const EnvLookup& env, const Sleeper& sleeper) {
    const auto pairs = test.graded();
    if (model.kind == ModelKind::knn) return score_knn(config, model, train, pairs, env, sleeper);
    return score_llm(config, model, test, pairs, env, sleeper);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RunResult run_scoring_eval(const Config& config, const RunOptions& options) {
    if (config.data.train.empty() || config.data.test.empty()) {
        throw DataError("missing split: set data.train and data.test");
    }
    if (config.models.empty()) throw ConfigError("no models configured");
    const EnvLookup env = options.env ? options.env : process_env();
    const auto clock = options.clock ? options.clock : std::function<std::string()>(utc_timestamp);
    const std::string started_at = clock();

    const Corpus train = load_corpus_file(config.data.train);
    const Corpus test = load_corpus_file(config.data.test);
    const auto train_hash = io::sha256_file(config.data.train);
    const auto test_hash = io::sha256_file(config.data.test);
    const auto dataset_hash = io::sha256_hex("train:" + train_hash + "\ntest:" + test_hash + "\n");

    RunResult result;
    result.run_id = run_id_for(config, dataset_hash);
    const std::filesystem::path root = std::filesystem::path(config.data.out_dir) / result.run_id;
    std::filesystem::create_directories(root);
    spdlog::info("run {}: {} train / {} test pairs, {} model(s)", result.run_id, train.annotations.size(),
                 test.annotations.size(), config.models.size());

    std::vector<std::string> provider_ids;
    for (const auto& m : config.models) provider_ids.push_back(provider_id(config, m, env));

    ordered_json artifacts = ordered_json::array();
    ordered_json models_json = ordered_json::array();
    std::vector<ScoringReport> reports;
    std::size_t failed = 0;

    for (std::size_t k = 0; k < config.models.size(); ++k) {
        const auto& model = config.models[k];
        ModelOutcome outcome;
        outcome.model_id = model.id;
        std::string stage = "score";
        std::size_t n_failed_items = 0;
        try {
            const auto predictions = score_with_model(config, model, train, test, env, options.sleeper);
            for (const auto& p : predictions) n_failed_items += p.ok() ? 0 : 1;
            outcome.predictions_path = root / ("predictions-" + file_stem_for(model.id) + ".jsonl");
            io::write_artifact(outcome.predictions_path, serialize_predictions(predictions), options.force);
            artifacts.push_back(artifact_entry(root, outcome.predictions_path));

            stage = "evaluate";
            auto report = evaluate_model(predictions, test.annotations);
            report.metadata = {dataset_hash, config.split.seed, {provider_ids[k]}, result.run_id};
            outcome.report_path = root / ("report-" + file_stem_for(model.id) + ".json");
            io::write_artifact(outcome.report_path, report_to_json(report), options.force);
            artifacts.push_back(artifact_entry(root, outcome.report_path));
            reports.push_back(report);
            outcome.report = std::move(report);
            outcome.ok = true;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            outcome.error = e.what();
            ++failed;
            spdlog::error("model {} failed during {}: {}", model.id, stage, e.what());
        }

        ordered_json m;
        m["id"] = model.id;
        m["kind"] = model.kind == ModelKind::knn ? "knn" : "llm";
        if (model.kind == ModelKind::llm) m["mode"] = to_string(model.mode);
        m["endpoint"] = endpoint_of(config, model);
        m["provider"] = provider_ids[k];
        m["status"] = outcome.ok ? "ok" : "failed";
        m["failed_stage"] = outcome.ok ? std::string() : stage;
        m["error"] = outcome.error;
        m["failed_items"] = n_failed_items;
        models_json.push_back(std::move(m));
        result.models.push_back(std::move(outcome));
    }

    if (!reports.empty()) {
        const auto summary_path = root / "summary.md";
        io::write_artifact(summary_path,
                           "# Scoring summary\n\n" + render_performance_table(reports) + "\n" +
                               render_distribution_table(reports),
                           options.force);
        artifacts.push_back(artifact_entry(root, summary_path));
    }

    if (failed == 0) {
        result.exit_code = ExitCode::success;
    } else if (failed < config.models.size()) {
        result.exit_code = ExitCode::partial;
    } else {
        result.exit_code = ExitCode::provider_error;
    }

    ordered_json manifest;
    manifest["run_id"] = result.run_id;
    manifest["created_at"] = started_at;
    manifest["config"] = nlohmann::ordered_json::parse(config.snapshot);
    manifest["dataset"] = {{"hash", dataset_hash},
                           {"train", {{"path", config.data.train}, {"sha256", train_hash}}},
                           {"test", {{"path", config.data.test}, {"sha256", test_hash}}}};
    manifest["seeds"] = {{"split", config.split.seed},
                         {"embedding", config.embedding.seed},
                         {"eval", config.eval.seed},
                         {"retry_jitter", config.retry.jitter_seed}};
    manifest["stages"] = {{"load", "ok"},
                          {"score", failed == config.models.size() ? "failed" : (failed ? "partial" : "ok")}};
    manifest["models"] = std::move(models_json);
    manifest["artifacts"] = std::move(artifacts);
    manifest["exit_code"] = static_cast<int>(result.exit_code);
    result.manifest_path = root / "manifest.json";
    write_manifest(result.manifest_path, std::move(manifest), options.force);
    return result;
}

} // namespace openresp
