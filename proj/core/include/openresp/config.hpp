#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "openresp/llm_scorer.hpp"
#include "openresp/providers.hpp"

namespace openresp {

enum class ModelKind { knn, llm };

struct ModelSpec {
    std::string id;
    ModelKind kind = ModelKind::llm;
    LlmMode mode = LlmMode::zero_shot;
    std::string endpoint;     // overrides completion.endpoint when set
    CompletionWireFormat wire_format = CompletionWireFormat::generic;
    std::string remote_model; // model name sent to openai_chat endpoints
    std::optional<CompletionParams> params;
};

/// Typed view of the layered configuration document.
///
/// Endpoints named "mock" use the in-process deterministic providers;
/// "mock:down" is a completion endpoint that always fails with a retryable
/// error. Anything else is an http(s) URL.
struct Config {
    struct Embedding {
        std::string endpoint = "mock";
        std::size_t dim = 16;
        std::uint64_t seed = 0;
        std::string token_env = "OPENRESP_EMBEDDING_TOKEN";
        std::size_t batch_size = 64;
        std::size_t max_in_flight = 4;
    } embedding;

    struct Completion {
        std::string endpoint = "mock";
        CompletionParams params;
        std::string token_env = "OPENRESP_COMPLETION_TOKEN";
        std::size_t max_in_flight = 4;
        int parse_retries = 1;
        std::chrono::milliseconds timeout{60'000};
    } completion;

    RetryPolicy retry;

    struct Split {
        double ratio = 0.8;
        std::uint64_t seed = 42;
    } split;

    struct Eval {
        std::size_t per_problem = 2;
        std::uint64_t seed = 7;
        std::vector<std::string> raters{"rater-1", "rater-2"};
        std::size_t validation_size = 100;
    } eval;

    struct Data {
        std::string train;
        std::string test;
        std::string out_dir = "runs"; // each run writes to out_dir/<run_id>
    } data;

    struct Serve {
        std::string host = "127.0.0.1";
        int port = 8080;
        std::string rater_token;
        std::string admin_token;
        std::string sessions_dir = "sessions";
        std::string runs_dir = "runs";
        std::string ui_dir;
    } serve;

    std::vector<ModelSpec> models;

    /// Merged configuration document (defaults < file < environment < flags),
    /// serialized as canonical JSON.
    std::string snapshot;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Layers defaults, the optional JSON file, environment variables and
/// "key.path=value" overrides. Every leaf key "a.b.c" can be overridden by
/// the environment variable OPENRESP_A_B_C. Values are parsed as JSON when
/// possible and taken as strings otherwise. Throws ConfigError.
Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                   const std::vector<std::string>& overrides);

/// Default configuration document as pretty JSON.
std::string default_config_json();

/// Provider construction shared by the CLI and the pipeline. Remote
/// providers are wrapped with retries and the in-flight bound.
std::shared_ptr<EmbeddingProvider> make_embedding_provider(const Config& config, const EnvLookup& env,
                                                           Sleeper sleeper = {});
std::shared_ptr<CompletionProvider> make_completion_provider(const Config& config, const ModelSpec& model,
                                                             const EnvLookup& env, Sleeper sleeper = {});

} // namespace openresp
