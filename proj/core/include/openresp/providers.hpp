#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace openresp {

// ---------------------------------------------------------------------------
// Value types

/// Fixed-dimension sentence embedding. All values finite.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

struct CompletionParams {
    double temperature = 0.5;
    double top_p = 0.5;
    std::optional<int> top_k = 30; // nullopt = unlimited
    int max_tokens = 256;

    bool operator==(const CompletionParams&) const = default;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    /// Parses "temp=0.5,top_p=0.5,top_k=30,max_tokens=200". Missing keys keep
    /// their defaults; top_k accepts "unlimited".
    static CompletionParams parse(std::string_view spec);
    std::string to_string() const;
};

struct CompletionResult {
    std::string text;
    std::chrono::milliseconds latency{0};
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

// ---------------------------------------------------------------------------
// Errors

class ProviderError : public std::runtime_error {
public:
    enum class Kind {
        retryable,  // timeout, rate limit, transient transport failure
        fatal,      // remote rejected the request or returned bad data
        exhausted,  // retryable failures used up the retry budget
    };

    ProviderError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }
    bool retryable() const { return kind_ == Kind::retryable; }

private:
    Kind kind_;
};

// ---------------------------------------------------------------------------
// Interfaces

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;

    /// One vector per text, in order. Texts that are empty after trimming map
    /// to the zero vector. Throws std::invalid_argument for an empty list.
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

    EmbeddingVector embed(const std::string& text);
};

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;

    virtual std::string id() const = 0;
    virtual CompletionResult complete(const std::string& prompt, const CompletionParams& params) = 0;

    /// Outstanding-call bound advertised to batch callers.
    virtual std::size_t max_in_flight() const { return 1; }
};

// ---------------------------------------------------------------------------
// Retry and concurrency

struct RetryPolicy {
    int attempts = 3;                 // total tries, >= 1
    std::chrono::milliseconds base_delay{200};
    std::chrono::milliseconds max_delay{10'000};
    double jitter = 0.25;             // +/- fraction applied to each delay
    std::uint64_t jitter_seed = 0;

    void validate() const;

    /// Delay before retry number `retry` (1-based), without jitter:
    /// min(base * 2^(retry-1), max).
    std::chrono::milliseconds backoff(int retry) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Runs `fn` until it succeeds, a non-retryable ProviderError escapes, or
/// the attempt budget is spent (then throws Kind::exhausted carrying the
/// last message). Only ProviderError::Kind::retryable is retried.
class RetryRunner {
public:
    explicit RetryRunner(RetryPolicy policy, Sleeper sleeper = {});

    template <typename Fn>
    auto run(Fn&& fn) -> decltype(fn()) {
        for (int attempt = 1;; ++attempt) {
            try {
                return fn();
            } catch (const ProviderError& e) {
                if (!e.retryable()) throw;
                on_retryable_failure(attempt, e);
            }
        }
    }

    const RetryPolicy& policy() const { return policy_; }

private:
    // Throws exhausted when `attempt` was the last one, otherwise sleeps.
    void on_retryable_failure(int attempt, const ProviderError& error);

    RetryPolicy policy_;
    Sleeper sleeper_;
    std::mutex rng_mutex_;
    std::uint64_t rng_state_;
};

/// Counting bound on outstanding calls.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::size_t limit);

    class Permit {
    public:
        explicit Permit(InFlightLimiter& owner);
        ~Permit();
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        InFlightLimiter& owner_;
    };

    std::size_t limit() const { return limit_; }
    std::size_t peak() const { return peak_.load(); }

private:
    std::size_t limit_;
    std::counting_semaphore<> slots_;
    std::atomic<std::size_t> current_{0};
    std::atomic<std::size_t> peak_{0};
};

/// Decorator adding retries, the in-flight bound, and request logging.
class ResilientCompletionProvider final : public CompletionProvider {
public:
    ResilientCompletionProvider(std::shared_ptr<CompletionProvider> inner, RetryPolicy policy,
                                std::size_t max_in_flight, Sleeper sleeper = {});

    std::string id() const override { return inner_->id(); }
    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override;
    std::size_t max_in_flight() const override { return limiter_.limit(); }
    std::size_t peak_in_flight() const { return limiter_.peak(); }

private:
    std::shared_ptr<CompletionProvider> inner_;
    RetryRunner retry_;
    InFlightLimiter limiter_;
};

class ResilientEmbeddingProvider final : public EmbeddingProvider {
public:
    ResilientEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, RetryPolicy policy,
                               std::size_t max_in_flight, Sleeper sleeper = {});

    std::string id() const override { return inner_->id(); }
    std::size_t dim() const override { return inner_->dim(); }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

private:
    std::shared_ptr<EmbeddingProvider> inner_;
    RetryRunner retry_;
    InFlightLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Deterministic mocks

/// Hashes whitespace tokens and adjacent token pairs (seeded FNV-1a) into
/// `dim` buckets; each chunk adds a hash-derived weight in (0,1] to its
/// bucket and bucket totals are squashed with 1 - exp(-w). Values lie in
/// [0,1); blank text gives the zero vector.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dim = 16, std::uint64_t seed = 0);

    std::string id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

    /// Pure function behind embed_batch.
    EmbeddingVector embed_text(std::string_view text) const;

    std::size_t texts_embedded() const { return texts_embedded_.load(); }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::atomic<std::size_t> texts_embedded_{0};
};

/// Returns a fixed reply per exact prompt. Unknown prompts raise a fatal
/// ProviderError unless a fallback reply is set.
class CannedCompletionProvider final : public CompletionProvider {
public:
    CannedCompletionProvider(std::string id, std::map<std::string, std::string> replies,
                             std::optional<std::string> fallback = std::nullopt);

    std::string id() const override { return id_; }
    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override;

private:
    std::string id_;
    std::map<std::string, std::string> replies_;
    std::optional<std::string> fallback_;
};

/// Answers every prompt with "Score: N\nFeedback: ...". N is taken from the
/// first "#score=N" marker in the prompt when present (any integer, so
/// out-of-range scores can be provoked), otherwise FNV-1a(prompt) mod 5.
/// Feedback is picked from a small phrase list by hash.
class TemplateCompletionProvider final : public CompletionProvider {
public:
    explicit TemplateCompletionProvider(std::string id = "mock-template", std::size_t max_in_flight = 4);

    std::string id() const override { return id_; }
    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override;
    std::size_t max_in_flight() const override { return max_in_flight_; }

    /// The reply complete() would give, without bookkeeping.
    static std::string reply_for(std::string_view prompt);

private:
    std::string id_;
    std::size_t max_in_flight_;
};

/// Wraps a callable; used to script failures and parameter-dependent output.
class FunctionCompletionProvider final : public CompletionProvider {
public:
    using Fn = std::function<CompletionResult(const std::string&, const CompletionParams&)>;

    FunctionCompletionProvider(std::string id, Fn fn, std::size_t max_in_flight = 1);

    std::string id() const override { return id_; }
    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override;
    std::size_t max_in_flight() const override { return max_in_flight_; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::string id_;
    Fn fn_;
    std::size_t max_in_flight_;
    std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Remote adapters

struct HttpEndpoint {
    std::string url;   // http(s)://host[:port]/path
    std::string token; // sent as "Authorization: Bearer <token>" when non-empty
    std::chrono::milliseconds timeout{30'000};
};

/// POST {texts:[...]} -> {vectors:[[...]]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string id, HttpEndpoint endpoint, std::size_t dim);

    std::string id() const override { return id_; }
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

private:
    std::string id_;
    HttpEndpoint endpoint_;
    std::size_t dim_;
};

enum class CompletionWireFormat {
    generic,     // {prompt, temperature, top_p, top_k, max_tokens} -> {text, usage?}
    openai_chat, // {model, messages, temperature, top_p, max_tokens} -> choices[0].message.content
};

class HttpCompletionProvider final : public CompletionProvider {
public:
    HttpCompletionProvider(std::string id, HttpEndpoint endpoint,
                           CompletionWireFormat format = CompletionWireFormat::generic,
                           std::string remote_model = {});

    std::string id() const override { return id_; }
    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override;

    /// Request body for the configured wire format (exposed for tests).
    std::string request_body(const std::string& prompt, const CompletionParams& params) const;

    /// Extracts text and token counts from a 2xx body. Throws fatal
    /// ProviderError when the body does not match the wire format.
    CompletionResult parse_response(std::string_view body) const;

private:
    std::string id_;
    HttpEndpoint endpoint_;
    CompletionWireFormat format_;
    std::string remote_model_;
};

/// Maps an HTTP status to an error kind: 408, 429 and 5xx are retryable,
/// everything else non-2xx is fatal.
ProviderError::Kind classify_http_status(int status);

} // namespace openresp
