#include "openresp/providers.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <thread>

#include "openresp/errors.hpp"
#include "openresp/io.hpp"

namespace openresp {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

bool blank(std::string_view text) {
    return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string trimmed(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

struct ParsedUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) throw ConfigError("invalid endpoint URL: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::string remote_message(const std::string& body) {
    try {
        auto j = json::parse(body);
        if (j.contains("error")) {
            const auto& e = j["error"];
            if (e.is_string()) return e.get<std::string>();
            if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"].get<std::string>();
        }
        if (j.contains("message") && j["message"].is_string()) return j["message"].get<std::string>();
    } catch (const json::exception&) {
    }
    return body.size() > 300 ? body.substr(0, 300) + "..." : body;
}

std::string post_json(const HttpEndpoint& endpoint, const std::string& body) {
    const auto url = parse_url(endpoint.url);
    httplib::Client client(url.origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (!endpoint.token.empty()) headers.emplace("Authorization", "Bearer " + endpoint.token);

    auto response = client.Post(url.path, headers, body, "application/json");
    if (!response) {
        throw ProviderError(ProviderError::Kind::retryable,
                            fmt::format("{}: transport error: {}", endpoint.url, httplib::to_string(response.error())));
    }
    if (response->status < 200 || response->status >= 300) {
        throw ProviderError(classify_http_status(response->status),
                            fmt::format("{}: HTTP {}: {}", endpoint.url, response->status, remote_message(response->body)));
    }
    return response->body;
}

std::vector<EmbeddingVector> zero_fill_blanks(std::span<const std::string> texts, std::size_t dim,
                                              const std::function<std::vector<EmbeddingVector>(
                                                  std::span<const std::string>)>& embed_non_blank) {
    std::vector<std::string> non_blank;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!blank(texts[i])) {
            non_blank.push_back(texts[i]);
            positions.push_back(i);
        }
    }
    std::vector<EmbeddingVector> out(texts.size(), EmbeddingVector{std::vector<double>(dim, 0.0)});
    if (non_blank.empty()) return out;
    auto vectors = embed_non_blank(non_blank);
    for (std::size_t k = 0; k < positions.size(); ++k) out[positions[k]] = std::move(vectors[k]);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

void CompletionParams::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
    if (top_k && *top_k <= 0) throw ConfigError("top_k must be positive or unlimited");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

CompletionParams CompletionParams::parse(std::string_view spec) {
    CompletionParams params;
    std::size_t start = 0;
    while (start <= spec.size()) {
        auto end = spec.find(',', start);
        if (end == std::string_view::npos) end = spec.size();
        const auto item = trimmed(spec.substr(start, end - start));
        start = end + 1;
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value in params: " + item);
        const auto key = trimmed(item.substr(0, eq));
        const auto value = trimmed(item.substr(eq + 1));
        try {
            std::size_t used = 0;
            if (key == "temp" || key == "temperature") {
                params.temperature = std::stod(value, &used);
            } else if (key == "top_p") {
                params.top_p = std::stod(value, &used);
            } else if (key == "top_k") {
                if (value == "unlimited" || value == "none") {
                    params.top_k.reset();
                    used = value.size();
                } else {
                    params.top_k = std::stoi(value, &used);
                }
            } else if (key == "max_tokens") {
                params.max_tokens = std::stoi(value, &used);
            } else {
                throw ConfigError("unknown completion parameter: " + key);
            }
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::logic_error&) {
            throw ConfigError("invalid value for " + key + ": " + value);
        }
    }
    params.validate();
    return params;
}

std::string CompletionParams::to_string() const {
    return fmt::format("temperature={},top_p={},top_k={},max_tokens={}", temperature, top_p,
                       top_k ? std::to_string(*top_k) : std::string("unlimited"), max_tokens);
}

EmbeddingVector EmbeddingProvider::embed(const std::string& text) {
    return embed_batch(std::span<const std::string>(&text, 1)).front();
}

// ---------------------------------------------------------------------------

void RetryPolicy::validate() const {
    if (attempts < 1) throw ConfigError("retry.attempts must be >= 1");
    if (base_delay.count() < 0 || max_delay.count() < 0) throw ConfigError("retry delays must be >= 0");
    if (!(jitter >= 0.0 && jitter < 1.0)) throw ConfigError("retry.jitter must lie in [0, 1)");
}

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
    const double scaled = static_cast<double>(base_delay.count()) * std::ldexp(1.0, std::max(0, retry - 1));
    return std::chrono::milliseconds(
        static_cast<std::int64_t>(std::min(scaled, static_cast<double>(max_delay.count()))));
}

RetryRunner::RetryRunner(RetryPolicy policy, Sleeper sleeper)
    : policy_(policy), sleeper_(std::move(sleeper)), rng_state_(policy.jitter_seed) {
    policy_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void RetryRunner::on_retryable_failure(int attempt, const ProviderError& error) {
    if (attempt >= policy_.attempts) {
        throw ProviderError(ProviderError::Kind::exhausted,
                            fmt::format("retries exhausted after {} attempt(s): {}", attempt, error.what()));
    }
    double factor = 1.0;
    if (policy_.jitter > 0.0) {
        std::lock_guard lock(rng_mutex_);
        const double u = static_cast<double>(splitmix64(rng_state_) >> 11) * 0x1.0p-53;
        factor += policy_.jitter * (2.0 * u - 1.0);
    }
    const auto delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(policy_.backoff(attempt).count()) * factor));
    spdlog::warn("attempt {} failed ({}); retrying in {} ms", attempt, error.what(), delay.count());
    sleeper_(delay);
}

InFlightLimiter::InFlightLimiter(std::size_t limit)
    : limit_(std::max<std::size_t>(limit, 1)), slots_(static_cast<std::ptrdiff_t>(limit_)) {}

InFlightLimiter::Permit::Permit(InFlightLimiter& owner) : owner_(owner) {
    owner_.slots_.acquire();
    const auto now = ++owner_.current_;
    auto peak = owner_.peak_.load();
    while (now > peak && !owner_.peak_.compare_exchange_weak(peak, now)) {
    }
}

InFlightLimiter::Permit::~Permit() {
    --owner_.current_;
    owner_.slots_.release();
}

ResilientCompletionProvider::ResilientCompletionProvider(std::shared_ptr<CompletionProvider> inner,
                                                         RetryPolicy policy, std::size_t max_in_flight,
                                                         Sleeper sleeper)
    : inner_(std::move(inner)), retry_(policy, std::move(sleeper)), limiter_(max_in_flight) {}

CompletionResult ResilientCompletionProvider::complete(const std::string& prompt, const CompletionParams& params) {
    params.validate();
    if (prompt.empty()) throw std::invalid_argument("prompt must not be empty");
    return retry_.run([&] {
        InFlightLimiter::Permit permit(limiter_);
        const auto start = Clock::now();
        auto result = inner_->complete(prompt, params);
        if (result.latency.count() == 0) {
            result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
        }
        spdlog::debug("completion {} latency={}ms prompt_tokens={} completion_tokens={}", inner_->id(),
                      result.latency.count(), result.prompt_tokens ? std::to_string(*result.prompt_tokens) : "?",
                      result.completion_tokens ? std::to_string(*result.completion_tokens) : "?");
        return result;
    });
}

ResilientEmbeddingProvider::ResilientEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                       RetryPolicy policy, std::size_t max_in_flight,
                                                       Sleeper sleeper)
    : inner_(std::move(inner)), retry_(policy, std::move(sleeper)), limiter_(max_in_flight) {}

std::vector<EmbeddingVector> ResilientEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    return retry_.run([&] {
        InFlightLimiter::Permit permit(limiter_);
        const auto start = Clock::now();
        auto vectors = inner_->embed_batch(texts);
        spdlog::debug("embedding {} batch={} latency={}ms", inner_->id(), texts.size(),
                      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
        return vectors;
    });
}

// ---------------------------------------------------------------------------

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("embedding dim must be positive");
}

std::string MockEmbeddingProvider::id() const { return fmt::format("mock-embedding/dim={}/seed={}", dim_, seed_); }

EmbeddingVector MockEmbeddingProvider::embed_text(std::string_view text) const {
    std::vector<double> mass(dim_, 0.0);
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) tokens.push_back(text.substr(i, j - i));
        i = j;
    }
    std::uint64_t state = seed_;
    const std::uint64_t basis = 0xcbf29ce484222325ULL ^ splitmix64(state);
    auto add_chunk = [&](const std::string& chunk) {
        const auto h = io::fnv1a64(chunk, basis);
        const double weight = static_cast<double>(((h >> 32) & 0xFFFFFF) + 1) / static_cast<double>(1 << 24);
        mass[h % dim_] += weight;
    };
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        add_chunk("u:" + std::string(tokens[k]));
        if (k + 1 < tokens.size()) add_chunk("b:" + std::string(tokens[k]) + ' ' + std::string(tokens[k + 1]));
    }
    EmbeddingVector out;
    out.values.reserve(dim_);
    for (double m : mass) out.values.push_back(1.0 - std::exp(-m));
    return out;
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("embed_batch requires at least one text");
    texts_embedded_ += texts.size();
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
}

CannedCompletionProvider::CannedCompletionProvider(std::string id, std::map<std::string, std::string> replies,
                                                   std::optional<std::string> fallback)
    : id_(std::move(id)), replies_(std::move(replies)), fallback_(std::move(fallback)) {}

CompletionResult CannedCompletionProvider::complete(const std::string& prompt, const CompletionParams&) {
    if (auto it = replies_.find(prompt); it != replies_.end()) return {it->second, {}, std::nullopt, std::nullopt};
    if (fallback_) return {*fallback_, {}, std::nullopt, std::nullopt};
    throw ProviderError(ProviderError::Kind::fatal, id_ + ": no canned reply for prompt");
}

TemplateCompletionProvider::TemplateCompletionProvider(std::string id, std::size_t max_in_flight)
    : id_(std::move(id)), max_in_flight_(max_in_flight) {}

std::string TemplateCompletionProvider::reply_for(std::string_view prompt) {
    static constexpr std::string_view kPhrases[] = {
        "Great job!",
        "Good start, check your reasoning.",
        "Can you explain your steps?",
        "Check your scale factor.",
        "Show how you got your answer.",
    };
    const auto h = io::fnv1a64(prompt);
    std::string score;
    static constexpr std::string_view kMarker = "#score=";
    if (auto pos = prompt.find(kMarker); pos != std::string_view::npos) {
        auto j = pos + kMarker.size();
        if (j < prompt.size() && prompt[j] == '-') score.push_back(prompt[j++]);
        while (j < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[j]))) score.push_back(prompt[j++]);
        if (score.empty() || score == "-") score.clear();
    }
    if (score.empty()) score = std::to_string(h % 5);
    return fmt::format("Score: {}\nFeedback: {}", score, kPhrases[(h >> 8) % std::size(kPhrases)]);
}

CompletionResult TemplateCompletionProvider::complete(const std::string& prompt, const CompletionParams&) {
    return {reply_for(prompt), {}, std::nullopt, std::nullopt};
}

FunctionCompletionProvider::FunctionCompletionProvider(std::string id, Fn fn, std::size_t max_in_flight)
    : id_(std::move(id)), fn_(std::move(fn)), max_in_flight_(max_in_flight) {}

CompletionResult FunctionCompletionProvider::complete(const std::string& prompt, const CompletionParams& params) {
    ++calls_;
    return fn_(prompt, params);
}

// ---------------------------------------------------------------------------

ProviderError::Kind classify_http_status(int status) {
    if (status == 408 || status == 429 || status >= 500) return ProviderError::Kind::retryable;
    return ProviderError::Kind::fatal;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string id, HttpEndpoint endpoint, std::size_t dim)
    : id_(std::move(id)), endpoint_(std::move(endpoint)), dim_(dim) {
    if (dim_ == 0) throw ConfigError("embedding dim must be positive");
    parse_url(endpoint_.url);
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("embed_batch requires at least one text");
    return zero_fill_blanks(texts, dim_, [this](std::span<const std::string> batch) {
        const auto body = post_json(endpoint_, json{{"texts", batch}}.dump());
        json reply;
        try {
            reply = json::parse(body);
        } catch (const json::exception& e) {
            throw ProviderError(ProviderError::Kind::fatal, id_ + ": unparseable embedding reply: " + e.what());
        }
        if (!reply.contains("vectors") || !reply["vectors"].is_array() || reply["vectors"].size() != batch.size()) {
            throw ProviderError(ProviderError::Kind::fatal, id_ + ": embedding reply has the wrong number of vectors");
        }
        std::vector<EmbeddingVector> out;
        out.reserve(batch.size());
        for (const auto& v : reply["vectors"]) {
            EmbeddingVector e;
            try {
                e.values = v.get<std::vector<double>>();
            } catch (const json::exception&) {
                throw ProviderError(ProviderError::Kind::fatal, id_ + ": embedding vector is not numeric");
            }
            if (e.dim() != dim_) {
                throw ProviderError(ProviderError::Kind::fatal,
                                    fmt::format("{}: dimension mismatch: expected {}, got {}", id_, dim_, e.dim()));
            }
            if (!std::all_of(e.values.begin(), e.values.end(), [](double x) { return std::isfinite(x); })) {
                throw ProviderError(ProviderError::Kind::fatal, id_ + ": non-finite embedding value");
            }
            out.push_back(std::move(e));
        }
        return out;
    });
}

HttpCompletionProvider::HttpCompletionProvider(std::string id, HttpEndpoint endpoint, CompletionWireFormat format,
                                               std::string remote_model)
    : id_(std::move(id)), endpoint_(std::move(endpoint)), format_(format), remote_model_(std::move(remote_model)) {
    parse_url(endpoint_.url);
}

std::string HttpCompletionProvider::request_body(const std::string& prompt, const CompletionParams& params) const {
    json body;
    if (format_ == CompletionWireFormat::openai_chat) {
        // Chat endpoints have no top_k; it is dropped.
        body["model"] = remote_model_;
        body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = params.temperature;
        body["top_p"] = params.top_p;
        body["max_tokens"] = params.max_tokens;
    } else {
        body["prompt"] = prompt;
        body["temperature"] = params.temperature;
        body["top_p"] = params.top_p;
        if (params.top_k) body["top_k"] = *params.top_k;
        body["max_tokens"] = params.max_tokens;
    }
    return body.dump();
}

CompletionResult HttpCompletionProvider::parse_response(std::string_view body) const {
    CompletionResult result;
    try {
        const auto reply = json::parse(body);
        const json* usage = nullptr;
        if (format_ == CompletionWireFormat::openai_chat) {
            result.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } else {
            result.text = reply.at("text").get<std::string>();
        }
        if (reply.contains("usage") && reply["usage"].is_object()) usage = &reply["usage"];
        if (usage) {
            if (usage->contains("prompt_tokens")) result.prompt_tokens = (*usage)["prompt_tokens"].get<int>();
            if (usage->contains("completion_tokens")) result.completion_tokens = (*usage)["completion_tokens"].get<int>();
        }
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::fatal, id_ + ": unexpected completion reply: " + e.what());
    }
    return result;
}

CompletionResult HttpCompletionProvider::complete(const std::string& prompt, const CompletionParams& params) {
    const auto start = Clock::now();
    auto result = parse_response(post_json(endpoint_, request_body(prompt, params)));
    result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    return result;
}

} // namespace openresp
