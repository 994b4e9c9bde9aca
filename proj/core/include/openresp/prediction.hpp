#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace openresp {

/// A model's grade for one answer.
struct ScoredFeedback {
    std::string model_id;
    int score = 0;
    std::string feedback;
    std::string raw_output;     // completion text, or match provenance for retrieval
    std::int64_t latency_ms = 0;

    bool operator==(const ScoredFeedback&) const = default;
};

enum class FailureKind { none, parse, provider, data };

std::string_view to_string(FailureKind kind);
FailureKind failure_kind_from_string(std::string_view text);

/// One line of a predictions file: either a ScoredFeedback or a recorded failure.
struct Prediction {
    std::string response_id;
    std::string problem_id;
    std::string model_id;
    std::optional<ScoredFeedback> scored;
    FailureKind failure = FailureKind::none;
    std::string error;

    bool ok() const { return scored.has_value(); }
    bool operator==(const Prediction&) const = default;
};

/// Line-delimited JSON, one prediction per line.
std::string serialize_predictions(std::span<const Prediction> predictions);
std::vector<Prediction> parse_predictions(std::string_view jsonl);

} // namespace openresp
