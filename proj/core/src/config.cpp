#include "openresp/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "openresp/errors.hpp"
#include "openresp/io.hpp"

namespace openresp {

namespace {

using nlohmann::json;

json params_json(const CompletionParams& p) {
    json j;
    j["temperature"] = p.temperature;
    j["top_p"] = p.top_p;
    j["top_k"] = p.top_k ? json(*p.top_k) : json(nullptr);
    j["max_tokens"] = p.max_tokens;
    return j;
}

json model_json(std::string id, std::string_view kind, std::string_view mode) {
    json m;
    m["id"] = std::move(id);
    m["kind"] = kind;
    m["mode"] = mode;
    m["endpoint"] = "";
    m["wire_format"] = "generic";
    m["remote_model"] = "";
    m["params"] = nullptr;
    return m;
}

bool is_http_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

json defaults_json() {
    const Config d;
    json j;
    j["embedding"] = {{"endpoint", d.embedding.endpoint},   {"dim", d.embedding.dim},
                      {"seed", d.embedding.seed},           {"token_env", d.embedding.token_env},
                      {"batch_size", d.embedding.batch_size}, {"max_in_flight", d.embedding.max_in_flight}};
    j["completion"] = {{"endpoint", d.completion.endpoint},
                       {"params", params_json(d.completion.params)},
                       {"token_env", d.completion.token_env},
                       {"max_in_flight", d.completion.max_in_flight},
                       {"parse_retries", d.completion.parse_retries},
                       {"timeout_ms", d.completion.timeout.count()}};
    j["retry"] = {{"attempts", d.retry.attempts},
                  {"base_delay_ms", d.retry.base_delay.count()},
                  {"max_delay_ms", d.retry.max_delay.count()},
                  {"jitter", d.retry.jitter},
                  {"jitter_seed", d.retry.jitter_seed}};
    j["split"] = {{"ratio", d.split.ratio}, {"seed", d.split.seed}};
    j["eval"] = {{"per_problem", d.eval.per_problem},
                 {"seed", d.eval.seed},
                 {"raters", d.eval.raters},
                 {"validation_size", d.eval.validation_size}};
    j["data"] = {{"train", d.data.train}, {"test", d.data.test}, {"out_dir", d.data.out_dir}};
    j["serve"] = {{"host", d.serve.host},
                  {"port", d.serve.port},
                  {"rater_token", d.serve.rater_token},
                  {"admin_token", d.serve.admin_token},
                  {"sessions_dir", d.serve.sessions_dir},
                  {"runs_dir", d.serve.runs_dir},
                  {"ui_dir", d.serve.ui_dir}};
    j["models"] = json::array({model_json("sbert-canberra", "knn", "zero_shot"),
                               model_json("goat-finetuned", "llm", "finetuned"),
                               model_json("gpt4-zero-shot", "llm", "zero_shot")});
    return j;
}

// Recursively merges `patch` into `base`; keys absent from `base` are errors
// except inside free-form values (arrays, nulls).
void merge_into(json& base, const json& patch, const std::string& where) {
    if (!patch.is_object()) throw ConfigError(where.empty() ? "config root must be an object" : where + " must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        auto it = base.find(key);
        if (it == base.end()) throw ConfigError("unknown config key " + path);
        if (it->is_object() && value.is_object()) {
            merge_into(*it, value, path);
        } else {
            *it = value;
        }
    }
}

// Leaf paths of the document; arrays and nulls count as leaves.
void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) collect_leaves(value, prefix.empty() ? key : prefix + "." + key, out);
    } else {
        out.push_back(prefix);
    }
}

std::string env_name(const std::string& path) {
    std::string out = "OPENRESP_";
    for (char c : path) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

json::json_pointer pointer_for(const std::string& path) {
    std::string p;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        p += "/" + path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return json::json_pointer(p);
}

// JSON when it parses, otherwise the raw string. String-typed leaves always
// take the raw text.
json coerce(const json& current, const std::string& raw) {
    if (current.is_string()) return raw;
    try {
        return json::parse(raw);
    } catch (const json::parse_error&) {
        return raw;
    }
}

void set_path(json& doc, const std::string& path, const std::string& raw, const std::string& origin) {
    const auto ptr = pointer_for(path);
    if (!doc.contains(ptr)) throw ConfigError("unknown config key " + path + " (from " + origin + ")");
    auto& slot = doc[ptr];
    if (slot.is_object()) throw ConfigError("config key " + path + " is a section, not a value");
    slot = coerce(slot, raw);
}

template <typename T>
T get(const json& j, const char* key, const std::string& section) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config value " + section + "." + key + " has the wrong type");
    }
}

CompletionParams params_from(const json& j, const std::string& where) {
    CompletionParams p;
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key != "temperature" && key != "top_p" && key != "top_k" && key != "max_tokens") {
            throw ConfigError("unknown config key " + where + "." + key);
        }
    }
    if (j.contains("temperature")) p.temperature = get<double>(j, "temperature", where);
    if (j.contains("top_p")) p.top_p = get<double>(j, "top_p", where);
    if (j.contains("top_k")) {
        const auto& k = j.at("top_k");
        if (k.is_null() || (k.is_string() && k.get<std::string>() == "unlimited")) {
            p.top_k.reset();
        } else {
            p.top_k = get<int>(j, "top_k", where);
        }
    }
    if (j.contains("max_tokens")) p.max_tokens = get<int>(j, "max_tokens", where);
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return p;
}

CompletionWireFormat wire_format_from(const std::string& s) {
    if (s == "generic") return CompletionWireFormat::generic;
    if (s == "openai_chat") return CompletionWireFormat::openai_chat;
    throw ConfigError("unknown wire_format " + s + " (expected generic or openai_chat)");
}

ModelSpec model_from(const json& j, std::size_t index) {
    const std::string where = "models[" + std::to_string(index) + "]";
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    static constexpr std::array<std::string_view, 7> known{"id", "kind", "mode", "endpoint", "wire_format",
                                                           "remote_model", "params"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key " + where + "." + key);
    }
    ModelSpec m;
    m.id = get<std::string>(j, "id", where);
    if (m.id.empty()) throw ConfigError(where + ".id must not be empty");
    const auto kind = j.contains("kind") ? get<std::string>(j, "kind", where) : std::string("llm");
    if (kind == "knn") {
        m.kind = ModelKind::knn;
    } else if (kind == "llm") {
        m.kind = ModelKind::llm;
    } else {
        throw ConfigError(where + ".kind must be knn or llm");
    }
    if (j.contains("mode")) m.mode = llm_mode_from_string(get<std::string>(j, "mode", where));
    if (j.contains("endpoint") && !j.at("endpoint").is_null()) m.endpoint = get<std::string>(j, "endpoint", where);
    if (j.contains("wire_format")) m.wire_format = wire_format_from(get<std::string>(j, "wire_format", where));
    if (j.contains("remote_model") && !j.at("remote_model").is_null()) {
        m.remote_model = get<std::string>(j, "remote_model", where);
    }
    if (j.contains("params") && !j.at("params").is_null()) m.params = params_from(j.at("params"), where + ".params");
    return m;
}

Config config_from(const json& j) {
    Config c;
    const auto& e = j.at("embedding");
    c.embedding.endpoint = get<std::string>(e, "endpoint", "embedding");
    c.embedding.dim = get<std::size_t>(e, "dim", "embedding");
    c.embedding.seed = get<std::uint64_t>(e, "seed", "embedding");
    c.embedding.token_env = get<std::string>(e, "token_env", "embedding");
    c.embedding.batch_size = get<std::size_t>(e, "batch_size", "embedding");
    c.embedding.max_in_flight = get<std::size_t>(e, "max_in_flight", "embedding");
    if (c.embedding.dim == 0) throw ConfigError("embedding.dim must be positive");
    if (c.embedding.batch_size == 0) throw ConfigError("embedding.batch_size must be positive");
    if (c.embedding.max_in_flight == 0) throw ConfigError("embedding.max_in_flight must be positive");

    const auto& comp = j.at("completion");
    c.completion.endpoint = get<std::string>(comp, "endpoint", "completion");
    c.completion.params = params_from(comp.at("params"), "completion.params");
    c.completion.token_env = get<std::string>(comp, "token_env", "completion");
    c.completion.max_in_flight = get<std::size_t>(comp, "max_in_flight", "completion");
    c.completion.parse_retries = get<int>(comp, "parse_retries", "completion");
    c.completion.timeout = std::chrono::milliseconds(get<std::int64_t>(comp, "timeout_ms", "completion"));
    if (c.completion.max_in_flight == 0) throw ConfigError("completion.max_in_flight must be positive");
    if (c.completion.parse_retries < 0) throw ConfigError("completion.parse_retries must be >= 0");
    if (c.completion.timeout.count() <= 0) throw ConfigError("completion.timeout_ms must be positive");

    const auto& r = j.at("retry");
    c.retry.attempts = get<int>(r, "attempts", "retry");
    c.retry.base_delay = std::chrono::milliseconds(get<std::int64_t>(r, "base_delay_ms", "retry"));
    c.retry.max_delay = std::chrono::milliseconds(get<std::int64_t>(r, "max_delay_ms", "retry"));
    c.retry.jitter = get<double>(r, "jitter", "retry");
    c.retry.jitter_seed = get<std::uint64_t>(r, "jitter_seed", "retry");
    c.retry.validate();

    const auto& s = j.at("split");
    c.split.ratio = get<double>(s, "ratio", "split");
    c.split.seed = get<std::uint64_t>(s, "seed", "split");
    if (!(c.split.ratio > 0.0 && c.split.ratio < 1.0)) throw ConfigError("split.ratio must lie in (0, 1)");

    const auto& ev = j.at("eval");
    c.eval.per_problem = get<std::size_t>(ev, "per_problem", "eval");
    c.eval.seed = get<std::uint64_t>(ev, "seed", "eval");
    c.eval.raters = get<std::vector<std::string>>(ev, "raters", "eval");
    c.eval.validation_size = get<std::size_t>(ev, "validation_size", "eval");
    if (c.eval.per_problem == 0) throw ConfigError("eval.per_problem must be positive");
    if (c.eval.raters.empty()) throw ConfigError("eval.raters must name at least one rater");

    const auto& d = j.at("data");
    c.data.train = get<std::string>(d, "train", "data");
    c.data.test = get<std::string>(d, "test", "data");
    c.data.out_dir = get<std::string>(d, "out_dir", "data");

    const auto& sv = j.at("serve");
    c.serve.host = get<std::string>(sv, "host", "serve");
    c.serve.port = get<int>(sv, "port", "serve");
    c.serve.rater_token = get<std::string>(sv, "rater_token", "serve");
    c.serve.admin_token = get<std::string>(sv, "admin_token", "serve");
    c.serve.sessions_dir = get<std::string>(sv, "sessions_dir", "serve");
    c.serve.runs_dir = get<std::string>(sv, "runs_dir", "serve");
    c.serve.ui_dir = get<std::string>(sv, "ui_dir", "serve");
    if (c.serve.port < 0 || c.serve.port > 65535) throw ConfigError("serve.port must lie in 0..65535");

    const auto& models = j.at("models");
    if (!models.is_array()) throw ConfigError("models must be an array");
    for (std::size_t i = 0; i < models.size(); ++i) {
        auto m = model_from(models[i], i);
        for (const auto& prev : c.models) {
            if (prev.id == m.id) throw ConfigError("duplicate model id " + m.id);
        }
        c.models.push_back(std::move(m));
    }

    if (c.embedding.endpoint != "mock" && !is_http_url(c.embedding.endpoint)) {
        throw ConfigError("embedding.endpoint must be \"mock\" or an http(s) URL, got " + c.embedding.endpoint);
    }
    for (const auto& m : c.models) {
        const auto& endpoint = m.endpoint.empty() ? c.completion.endpoint : m.endpoint;
        if (endpoint != "mock" && endpoint != "mock:down" && !is_http_url(endpoint)) {
            throw ConfigError("completion endpoint for model " + m.id +
                              " must be \"mock\", \"mock:down\" or an http(s) URL, got " + endpoint);
        }
    }
    return c;
}

std::string redacted_snapshot(json doc) {
    for (const char* key : {"rater_token", "admin_token"}) {
        auto& v = doc["serve"][key];
        if (v.is_string() && !v.get<std::string>().empty()) v = "<redacted>";
    }
    return doc.dump();
}

std::string resolve_token(const EnvLookup& env, const std::string& name) {
    if (name.empty() || !env) return {};
    return env(name).value_or(std::string{});
}

} // namespace

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                   const std::vector<std::string>& overrides) {
    json doc = defaults_json();
    if (file) {
        if (!std::filesystem::exists(*file)) throw ConfigError("config file not found: " + file->string());
        json patch;
        try {
            patch = json::parse(io::read_file(*file));
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
        }
        merge_into(doc, patch, "");
    }

    if (env) {
        std::vector<std::string> leaves;
        collect_leaves(doc, "", leaves);
        for (const auto& path : leaves) {
            if (auto value = env(env_name(path))) set_path(doc, path, *value, env_name(path));
        }
    }

    for (const auto& flag : overrides) {
        const auto eq = flag.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + flag);
        set_path(doc, flag.substr(0, eq), flag.substr(eq + 1), "--set");
    }

    Config config = config_from(doc);
    config.snapshot = redacted_snapshot(doc);
    return config;
}

std::string default_config_json() { return defaults_json().dump(2) + "\n"; }

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const Config& config, const EnvLookup& env,
                                                           Sleeper sleeper) {
    const auto& e = config.embedding;
    std::shared_ptr<EmbeddingProvider> inner;
    if (e.endpoint == "mock") {
        inner = std::make_shared<MockEmbeddingProvider>(e.dim, e.seed);
    } else if (is_http_url(e.endpoint)) {
        inner = std::make_shared<HttpEmbeddingProvider>(
            "http-embedding:" + e.endpoint, HttpEndpoint{e.endpoint, resolve_token(env, e.token_env), config.completion.timeout},
            e.dim);
    } else {
        throw ConfigError("embedding.endpoint must be \"mock\" or an http(s) URL, got " + e.endpoint);
    }
    return std::make_shared<ResilientEmbeddingProvider>(std::move(inner), config.retry, e.max_in_flight,
                                                        std::move(sleeper));
}

std::shared_ptr<CompletionProvider> make_completion_provider(const Config& config, const ModelSpec& model,
                                                             const EnvLookup& env, Sleeper sleeper) {
    const auto& c = config.completion;
    const std::string endpoint = model.endpoint.empty() ? c.endpoint : model.endpoint;
    std::shared_ptr<CompletionProvider> inner;
    if (endpoint == "mock") {
        inner = std::make_shared<TemplateCompletionProvider>(model.id, c.max_in_flight);
    } else if (endpoint == "mock:down") {
        inner = std::make_shared<FunctionCompletionProvider>(
            model.id,
            [](const std::string&, const CompletionParams&) -> CompletionResult {
                throw ProviderError(ProviderError::Kind::retryable, "endpoint unavailable (mock:down)");
            },
            c.max_in_flight);
    } else if (is_http_url(endpoint)) {
        inner = std::make_shared<HttpCompletionProvider>(model.id,
                                                         HttpEndpoint{endpoint, resolve_token(env, c.token_env), c.timeout},
                                                         model.wire_format, model.remote_model);
    } else {
        throw ConfigError("completion endpoint for model " + model.id + " must be \"mock\", \"mock:down\" or an http(s) URL, got " +
                          endpoint);
    }
    return std::make_shared<ResilientCompletionProvider>(std::move(inner), config.retry, c.max_in_flight,
                                                         std::move(sleeper));
}

} // namespace openresp
