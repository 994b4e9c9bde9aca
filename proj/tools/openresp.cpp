// openresp: command line front end for the grading and feedback engine.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "openresp/config.hpp"
#include "openresp/corpus.hpp"
#include "openresp/feedback_eval.hpp"
#include "openresp/io.hpp"
#include "openresp/llm_scorer.hpp"
#include "openresp/metrics.hpp"
#include "openresp/pipeline.hpp"
#include "openresp/service.hpp"
#include "openresp/similarity.hpp"

namespace fs = std::filesystem;
using namespace openresp;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Globals {
    std::string config_file;
    std::vector<std::string> overrides;
    bool force = false;
    bool verbose = false;

    Config load() const {
        std::optional<fs::path> file;
        if (!config_file.empty()) file = config_file;
        return load_config(file, process_env(), overrides);
    }
};

void emit(const std::string& output, const std::string& content, bool force) {
    if (output.empty() || output == "-") {
        std::cout << content;
        if (!content.empty() && content.back() != '\n') std::cout << '\n';
    } else {
        if (auto parent = fs::path(output).parent_path(); !parent.empty()) fs::create_directories(parent);
        io::write_artifact(output, content, force);
        spdlog::info("wrote {}", output);
    }
}

const ModelSpec& find_model(const Config& config, const std::string& id, ModelKind kind) {
    for (const auto& m : config.models) {
        if (m.id == id && m.kind == kind) return m;
    }
    std::vector<std::string> names;
    for (const auto& m : config.models) {
        if (m.kind == kind) names.push_back(m.id);
    }
    throw ConfigError(fmt::format("no {} model named '{}' in config (have: {})", kind == ModelKind::knn ? "knn" : "llm", id,
                                  fmt::join(names, ", ")));
}

// Test pairs, narrowed to one response when `response_id` is set.
std::vector<GradedResponse> select_pairs(const Corpus& corpus, const std::string& response_id) {
    auto pairs = corpus.graded();
    if (response_id.empty()) return pairs;
    for (auto& g : pairs) {
        if (g.response.response_id == response_id) return {g};
    }
    throw DataError("no graded response " + response_id + " in test corpus");
}

ordered_json prediction_json(const Prediction& p) {
    ordered_json j = ordered_json::parse(serialize_predictions(std::span(&p, 1)));
    return j;
}

std::vector<CompletionParams> parse_grid(const std::string& spec) {
    std::vector<CompletionParams> grid;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const auto semi = spec.find(';', start);
        const auto part = spec.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
        if (part.find_first_not_of(" \t") != std::string::npos) grid.push_back(CompletionParams::parse(part));
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    if (grid.empty()) throw ConfigError("grid is empty");
    return grid;
}

std::vector<CompletionParams> default_grid() {
    std::vector<CompletionParams> grid;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        for (double p : {0.5, 0.9}) {
            CompletionParams c;
            c.temperature = t;
            c.top_p = p;
            grid.push_back(c);
        }
    }
    return grid;
}

FeedbackService* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service) g_service->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"openresp: automated scoring and feedback for math open responses"};
    app.set_version_flag("--version", std::string("openresp ") + "0.3.0");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("-c,--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override a config value: key.path=value (repeatable)");
    app.add_flag("-f,--force", g.force, "Overwrite existing outputs whose content would change");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");

    // ingest
    std::string ingest_in, ingest_out, ingest_report;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse, clean and filter raw records into a corpus file");
    ingest_cmd->add_option("-i,--input", ingest_in, "Raw JSONL records")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("-o,--output,--out", ingest_out, "Cleaned corpus JSONL")->required();
    ingest_cmd->add_option("--report", ingest_report, "Ingest report JSON (default: stdout)");

    // split
    std::string split_in, split_train, split_test, split_manifest;
    std::optional<double> split_ratio;
    std::optional<std::uint64_t> split_seed;
    auto* split_cmd = app.add_subcommand("split", "Per-problem train/test split");
    split_cmd->add_option("-i,--input", split_in, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--train-out", split_train, "Training corpus output")->required();
    split_cmd->add_option("--test-out", split_test, "Test corpus output")->required();
    split_cmd->add_option("--manifest", split_manifest, "Split manifest JSON (default: stdout)");
    split_cmd->add_option("--ratio", split_ratio, "Training fraction (default: split.ratio)");
    split_cmd->add_option("--seed", split_seed, "Shuffle seed (default: split.seed)");

    // build-index
    std::string index_train, index_out;
    auto* index_cmd = app.add_subcommand("build-index", "Embed training answers into a similarity index");
    index_cmd->add_option("--train", index_train, "Training corpus JSONL")->required()->check(CLI::ExistingFile);
    index_cmd->add_option("-o,--output,--out", index_out, "Index JSON")->required();

    // score-knn
    std::string knn_index, knn_test, knn_out, knn_response, knn_problem, knn_answer, knn_model = "sbert-canberra";
    auto* knn_cmd = app.add_subcommand("score-knn", "Score test answers by nearest graded neighbour");
    knn_cmd->add_option("--index", knn_index, "Index JSON from build-index")->required()->check(CLI::ExistingFile);
    auto* knn_test_opt = knn_cmd->add_option("--test", knn_test, "Test corpus JSONL")->check(CLI::ExistingFile);
    knn_cmd->add_option("--response", knn_response, "Score only this response and print it")->needs(knn_test_opt);
    auto* knn_problem_opt = knn_cmd->add_option("--problem", knn_problem, "Score one ad hoc answer to this problem id");
    auto* knn_answer_opt = knn_cmd->add_option("--answer", knn_answer, "Answer text for --problem");
    knn_problem_opt->needs(knn_answer_opt)->excludes(knn_test_opt);
    knn_answer_opt->needs(knn_problem_opt);
    knn_cmd->add_option("--model", knn_model, "Model id recorded in predictions")->capture_default_str();
    knn_cmd->add_option("-o,--output,--out", knn_out, "Predictions JSONL (default: stdout)");

    // score-llm
    std::string llm_model, llm_test, llm_out, llm_response, llm_params, llm_mode;
    auto* llm_cmd = app.add_subcommand("score-llm", "Score test answers with a completion model");
    llm_cmd->add_option("--model", llm_model, "Model id from the config")->required();
    llm_cmd->add_option("--test", llm_test, "Test corpus JSONL")->required()->check(CLI::ExistingFile);
    llm_cmd->add_option("--response", llm_response, "Score only this response and print it");
    llm_cmd->add_option("--mode", llm_mode, "Override the model's mode: zero_shot or finetuned");
    llm_cmd->add_option("--params", llm_params, "Inference parameters, e.g. temp=0.5,top_p=0.5,top_k=30");
    llm_cmd->add_option("-o,--output,--out", llm_out, "Predictions JSONL (default: stdout)");

    // tune
    std::string tune_model, tune_train, tune_validation, tune_grid, tune_out;
    std::optional<std::size_t> tune_size;
    auto* tune_cmd = app.add_subcommand("tune", "Grid-search inference parameters on a validation subset");
    tune_cmd->add_option("--model", tune_model, "Model id from the config")->required();
    auto* tune_train_opt =
        tune_cmd->add_option("--train", tune_train, "Training corpus JSONL; a seeded subset is validated")->check(CLI::ExistingFile);
    tune_cmd->add_option("--validation", tune_validation, "Validation corpus JSONL, used whole")
        ->check(CLI::ExistingFile)
        ->excludes(tune_train_opt);
    tune_cmd->add_option("--grid", tune_grid,
                         "Grid points separated by ';' or a file with one point per line, e.g. \"temp=0.3;temp=0.5,top_p=0.9\"");
    tune_cmd->add_option("--validation-size", tune_size, "Validation items (default: eval.validation_size)");
    tune_cmd->add_option("-o,--output,--out", tune_out, "Result JSON (default: stdout)");

    // export-instructions
    std::string instr_train, instr_out;
    bool instr_score_only = false;
    auto* instr_cmd = app.add_subcommand("export-instructions", "Write instruction/target records for fine-tuning");
    instr_cmd->add_option("--train", instr_train, "Training corpus JSONL")->required()->check(CLI::ExistingFile);
    instr_cmd->add_option("-o,--output,--out", instr_out, "Records JSONL (default: stdout)");
    instr_cmd->add_flag("--score-only", instr_score_only, "Targets carry the score line only");

    // eval-scoring
    std::string eval_preds, eval_test, eval_out;
    auto* eval_cmd = app.add_subcommand("eval-scoring", "AUC, RMSE and kappa of a predictions file");
    eval_cmd->add_option("--predictions", eval_preds, "Predictions JSONL")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--test", eval_test, "Test corpus JSONL")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("-o,--output,--out", eval_out, "Report JSON (default: stdout)");

    // run
    auto* run_cmd = app.add_subcommand("run", "Score and evaluate every configured model (data.train / data.test)");

    // sample-eval
    std::string sample_test, sample_out, sample_id = "session-1";
    std::vector<std::string> sample_preds, sample_raters;
    std::optional<std::size_t> sample_per_problem;
    std::optional<std::uint64_t> sample_seed;
    auto* sample_cmd = app.add_subcommand("sample-eval", "Sample a blind rating session from model predictions");
    sample_cmd->add_option("--test", sample_test, "Test corpus JSONL")->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("--predictions", sample_preds, "Predictions JSONL, one per model")->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("--per-problem", sample_per_problem, "Items per problem (default: eval.per_problem)");
    sample_cmd->add_option("--seed", sample_seed, "Sampling seed (default: eval.seed)");
    sample_cmd->add_option("--raters", sample_raters, "Rater ids (default: eval.raters)")->delimiter(',');
    sample_cmd->add_option("--session-id", sample_id, "Session id")->capture_default_str();
    sample_cmd->add_option("-o,--output,--out", sample_out, "Session JSON")->required();

    // serve
    std::string serve_sessions, serve_host, serve_runs, serve_ui;
    std::optional<int> serve_port;
    auto* serve_cmd = app.add_subcommand("serve", "Host rating sessions and run reports over HTTP");
    serve_cmd->add_option("--sessions", serve_sessions, "Directory of session JSON files (default: serve.sessions_dir)");
    serve_cmd->add_option("--host", serve_host, "Bind address (default: serve.host)");
    serve_cmd->add_option("--port", serve_port, "Port (default: serve.port)");
    serve_cmd->add_option("--runs", serve_runs, "Run directory root (default: serve.runs_dir)");
    serve_cmd->add_option("--ui", serve_ui, "Static rater UI bundle (default: serve.ui_dir)");

    // report-feedback
    std::string rf_session, rf_out;
    auto* rf_cmd = app.add_subcommand("report-feedback", "Consensus and preference tables for a completed session");
    rf_cmd->add_option("--session", rf_session, "Exported session JSON")->required()->check(CLI::ExistingFile);
    rf_cmd->add_option("-o,--output,--out", rf_out, "Report JSON (tables go to stdout)");

    // report-scoring
    std::vector<std::string> rs_reports;
    auto* rs_cmd = app.add_subcommand("report-scoring", "Performance and distribution tables for scoring reports");
    rs_cmd->add_option("reports", rs_reports, "Report JSON files")->required()->check(CLI::ExistingFile);

    // show-config
    auto* show_cmd = app.add_subcommand("show-config", "Print the merged configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("openresp"));
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");

    try {
        const Config config = g.load();

        if (*ingest_cmd) {
            const auto result = ingest(io::read_file(ingest_in));
            emit(ingest_out, serialize_corpus(result.corpus), g.force);
            emit(ingest_report, ingest_report_json(result), g.force);
            if (!result.rejected.empty()) spdlog::warn("{} record(s) rejected", result.rejected.size());
        } else if (*split_cmd) {
            const auto corpus = load_corpus_file(split_in);
            const auto graded = corpus.graded();
            const auto split = split_per_problem(graded, split_ratio.value_or(config.split.ratio),
                                                 split_seed.value_or(config.split.seed));
            emit(split_train, serialize_corpus(subset_corpus(corpus, split.train)), g.force);
            emit(split_test, serialize_corpus(subset_corpus(corpus, split.test)), g.force);
            emit(split_manifest, split_manifest_json(split), g.force);
        } else if (*index_cmd) {
            const auto train = load_corpus_file(index_train);
            auto embedder = make_embedding_provider(config, process_env());
            const auto graded = train.graded();
            const auto index = SimilarityIndex::build(graded, *embedder, config.embedding.batch_size);
            emit(index_out, index.to_json(), g.force);
            spdlog::info("indexed {} answers across {} problems", index.size(), index.pools().size());
        } else if (*knn_cmd) {
            const auto index = SimilarityIndex::from_json(io::read_file(knn_index));
            auto embedder = make_embedding_provider(config, process_env());
            if (embedder->id() != index.embedder_id()) {
                throw ConfigError("index was built with " + index.embedder_id() + " but the configured embedder is " +
                                  embedder->id());
            }
            if (!knn_problem.empty()) {
                const auto hit = index.predict(knn_problem, knn_answer, *embedder);
                ordered_json j{{"problem_id", knn_problem},
                               {"score", hit.predicted_score},
                               {"feedback", hit.predicted_feedback},
                               {"matched_response_id", hit.matched_response_id},
                               {"distance", hit.distance}};
                emit(knn_out, j.dump(2) + "\n", g.force);
                return 0;
            }
            if (knn_test.empty()) throw ConfigError("score-knn needs --test or --problem with --answer");
            const auto test = load_corpus_file(knn_test);
            std::vector<Prediction> out;
            for (const auto& pair : select_pairs(test, knn_response)) {
                const auto& r = pair.response;
                Prediction p{r.response_id, r.problem_id, knn_model, std::nullopt, FailureKind::none, {}};
                try {
                    const auto hit = index.predict(r.problem_id, r.answer, *embedder);
                    p.scored = ScoredFeedback{knn_model, hit.predicted_score, hit.predicted_feedback,
                                              fmt::format("match={} distance={:.17g}", hit.matched_response_id, hit.distance), 0};
                } catch (const DataError& e) {
                    p.failure = FailureKind::data;
                    p.error = e.what();
                }
                out.push_back(std::move(p));
            }
            if (!knn_response.empty()) {
                emit(knn_out, prediction_json(out.front()).dump(2), g.force);
                return out.front().ok() ? 0 : static_cast<int>(ExitCode::data_error);
            }
            emit(knn_out, serialize_predictions(out), g.force);
        } else if (*llm_cmd) {
            auto model = find_model(config, llm_model, ModelKind::llm);
            if (!llm_params.empty()) model.params = CompletionParams::parse(llm_params);
            if (!llm_mode.empty()) model.mode = llm_mode_from_string(llm_mode);
            const auto test = load_corpus_file(llm_test);
            auto pairs = select_pairs(test, llm_response);
            Corpus narrowed = subset_corpus(test, pairs);
            const auto predictions = score_with_model(config, model, Corpus{}, narrowed, process_env());
            if (!llm_response.empty()) {
                emit(llm_out, prediction_json(predictions.front()).dump(2), g.force);
                if (predictions.front().ok()) return 0;
                return static_cast<int>(predictions.front().failure == FailureKind::provider ? ExitCode::provider_error
                                                                                            : ExitCode::data_error);
            }
            emit(llm_out, serialize_predictions(predictions), g.force);
            std::size_t failed = 0;
            for (const auto& p : predictions) failed += p.ok() ? 0 : 1;
            if (failed == predictions.size() && failed > 0) return static_cast<int>(ExitCode::provider_error);
            if (failed > 0) {
                spdlog::warn("{} of {} items failed", failed, predictions.size());
                return static_cast<int>(ExitCode::partial);
            }
        } else if (*tune_cmd) {
            const auto& model = find_model(config, tune_model, ModelKind::llm);
            if (tune_train.empty() && tune_validation.empty()) throw ConfigError("tune needs --train or --validation");
            const auto train = load_corpus_file(tune_validation.empty() ? tune_train : tune_validation);
            const auto graded = train.graded();
            const auto validation = tune_validation.empty()
                                        ? validation_subset(graded, tune_size.value_or(config.eval.validation_size),
                                                            config.split.seed)
                                        : graded;
            LlmScorerOptions options;
            options.model_id = model.id;
            options.mode = model.mode;
            options.parse_retries = config.completion.parse_retries;
            LlmScorer scorer(make_completion_provider(config, model, process_env()), Rubric::illustrative_math(), options);
            auto grid_spec = tune_grid;
            if (std::filesystem::is_regular_file(grid_spec)) {
                grid_spec.clear();
                for (const auto& line : io::split_lines(io::read_file(tune_grid))) grid_spec += line + ";";
            }
            const auto grid = grid_spec.empty() ? default_grid() : parse_grid(grid_spec);
            const auto result = tune_inference_params(scorer, train, validation, grid);
            ordered_json j;
            j["model"] = model.id;
            j["validation_items"] = validation.size();
            j["best"] = result.best.to_string();
            j["best_index"] = result.best_index;
            auto points = ordered_json::array();
            for (const auto& p : result.grid) {
                points.push_back({{"params", p.params.to_string()}, {"mse", p.mse}, {"failed", p.failed}});
            }
            j["grid"] = std::move(points);
            emit(tune_out, j.dump(2) + "\n", g.force);
        } else if (*instr_cmd) {
            const auto train = load_corpus_file(instr_train);
            const auto graded = train.graded();
            const auto records = build_instruction_records(
                train, graded, Rubric::illustrative_math(),
                instr_score_only ? TargetFormat::score_only : TargetFormat::score_and_feedback);
            emit(instr_out, serialize_instruction_records(records), g.force);
        } else if (*eval_cmd) {
            const auto predictions = parse_predictions(io::read_file(eval_preds));
            const auto test = load_corpus_file(eval_test);
            const auto report = evaluate_model(predictions, test.annotations);
            emit(eval_out, report_to_json(report), g.force);
            if (!eval_out.empty() && eval_out != "-") std::cout << render_performance_table(std::span(&report, 1));
        } else if (*run_cmd) {
            RunOptions options;
            options.force = g.force;
            const auto result = run_scoring_eval(config, options);
            std::vector<ScoringReport> reports;
            for (const auto& m : result.models) {
                if (m.report) reports.push_back(*m.report);
                else std::cerr << fmt::format("model {} failed: {}\n", m.model_id, m.error);
            }
            if (!reports.empty()) std::cout << render_performance_table(reports);
            std::cout << "manifest: " << result.manifest_path.string() << "\n";
            return static_cast<int>(result.exit_code);
        } else if (*sample_cmd) {
            const auto test = load_corpus_file(sample_test);
            std::map<std::string, std::vector<Prediction>> by_model;
            std::vector<std::string> model_ids;
            for (const auto& file : sample_preds) {
                for (auto& p : parse_predictions(io::read_file(file))) {
                    if (!by_model.contains(p.model_id)) model_ids.push_back(p.model_id);
                    by_model[p.model_id].push_back(std::move(p));
                }
            }
            const auto seed = sample_seed.value_or(config.eval.seed);
            const auto per_problem = sample_per_problem.value_or(config.eval.per_problem);
            const auto graded = test.graded();
            auto items = sample_eval_set(test, graded, per_problem, seed);
            attach_candidates(items, by_model, seed);
            auto raters = sample_raters.empty() ? config.eval.raters : sample_raters;
            const auto session =
                RatingSession::create(sample_id, std::move(items), model_ids, std::move(raters), seed, per_problem);
            emit(sample_out, session.to_json(), g.force);
        } else if (*serve_cmd) {
            FeedbackService::Options options;
            options.rater_token = config.serve.rater_token;
            options.admin_token = config.serve.admin_token;
            options.runs_dir = serve_runs.empty() ? config.serve.runs_dir : serve_runs;
            options.ui_dir = serve_ui.empty() ? config.serve.ui_dir : serve_ui;
            FeedbackService service(options);
            const auto n = service.load_sessions(serve_sessions.empty() ? config.serve.sessions_dir : serve_sessions);
            spdlog::info("loaded {} session(s)", n);
            service.bind(serve_host.empty() ? config.serve.host : serve_host, serve_port.value_or(config.serve.port));
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.run();
            g_service = nullptr;
        } else if (*rf_cmd) {
            const auto session = RatingSession::from_json(io::read_file(rf_session));
            const auto report = build_consensus_report(session.snapshot());
            std::cout << render_consensus_tables(report);
            if (!rf_out.empty()) emit(rf_out, consensus_report_to_json(report), g.force);
        } else if (*rs_cmd) {
            std::vector<ScoringReport> reports;
            for (const auto& f : rs_reports) reports.push_back(report_from_json(io::read_file(f)));
            std::cout << render_performance_table(reports) << "\n" << render_distribution_table(reports);
        } else if (*show_cmd) {
            std::cout << nlohmann::json::parse(config.snapshot).dump(2) << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::usage);
    } catch (const ProviderError& e) {
        spdlog::error("provider: {}", e.what());
        return static_cast<int>(ExitCode::provider_error);
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::data_error);
    } catch (const ParseFailure& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::data_error);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::data_error);
    } catch (const TemplateError& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::usage);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitCode::data_error);
    }
}
