#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "openresp/corpus.hpp"
#include "openresp/prediction.hpp"
#include "openresp/providers.hpp"

namespace openresp {

// ---------------------------------------------------------------------------
// Rubric

struct RubricTier {
    int points = 0;
    std::string criterion; // completes "Students should get N points if ..."
};

/// Five tiers ordered 4, 3, 2, 1, 0 points.
class Rubric {
public:
    /// Throws ConfigError unless there are exactly five tiers carrying the
    /// point values 4..0 once each; tiers are stored in descending order.
    explicit Rubric(std::vector<RubricTier> tiers);

    /// The Illustrative Mathematics 0-4 rubric.
    static Rubric illustrative_math();

    std::span<const RubricTier> tiers() const { return tiers_; }

    /// "1. Students should get 4 points if ...\n...5. Students should get 0
    /// points if ..." (no trailing newline).
    std::string render() const;

private:
    std::vector<RubricTier> tiers_;
};

// ---------------------------------------------------------------------------
// Templates

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text with `{name}` placeholders (name = [a-z_]+). Rendering substitutes in
/// a single pass, so substituted values are never rescanned.
class PromptTemplate {
public:
    explicit PromptTemplate(std::string text);

    /// Throws TemplateError when a placeholder has no value.
    std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

    /// Distinct placeholder names, with occurrence counts.
    const std::map<std::string, int, std::less<>>& placeholders() const { return counts_; }
    const std::string& text() const { return text_; }

    /// Throws TemplateError unless every name in `names` occurs exactly once.
    void require_once(std::initializer_list<std::string_view> names) const;

private:
    struct Piece {
        bool placeholder = false;
        std::string text; // literal text or placeholder name
    };

    std::string text_;
    std::vector<Piece> pieces_;
    std::map<std::string, int, std::less<>> counts_;
};

/// The zero-shot grading prompt with {body}, {value} and {rubric}.
const std::string& default_zero_shot_template();

/// Instruction prompt used for fine-tuning records and fine-tuned inference.
const std::string& default_instruction_template();

/// Renders the zero-shot template. Throws TemplateError when `tmpl` lacks
/// exactly one {body} and one {value}, or has an unknown placeholder.
std::string build_zero_shot_prompt(const Problem& problem, std::string_view answer, const Rubric& rubric);
std::string build_zero_shot_prompt(const Problem& problem, std::string_view answer, const Rubric& rubric,
                                   const PromptTemplate& tmpl);

// ---------------------------------------------------------------------------
// Output grammar

enum class TargetFormat { score_and_feedback, score_only };

/// "Score: N\nFeedback: text", or "Score: N" for score_only.
std::string format_model_output(int score, std::string_view feedback,
                                TargetFormat format = TargetFormat::score_and_feedback);

class ParseFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParsedOutput {
    int score = 0;
    std::string feedback;

    bool operator==(const ParsedOutput&) const = default;
};

/// Primary grammar: a line "Score: <int>" (label case-insensitive, markdown
/// '*'/'#' decoration ignored) and the text after a later "Feedback:" label
/// to the end, trimmed. Fallback when no Score line exists: the first
/// standalone integer on the first line is the score and the text after it
/// is the feedback. Scores outside 0..4 throw ParseFailure; they are never
/// clamped.
ParsedOutput parse_model_output(std::string_view raw);

// ---------------------------------------------------------------------------
// Instruction records

struct InstructionRecord {
    std::string input;
    std::string target;

    bool operator==(const InstructionRecord&) const = default;
};

InstructionRecord build_instruction_record(const Problem& problem, std::string_view answer,
                                           const TeacherAnnotation& annotation, const Rubric& rubric,
                                           TargetFormat format = TargetFormat::score_and_feedback);

/// One record per pair; pairs whose problem is missing from `corpus` throw DataError.
std::vector<InstructionRecord> build_instruction_records(const Corpus& corpus,
                                                         std::span<const GradedResponse> pairs,
                                                         const Rubric& rubric,
                                                         TargetFormat format = TargetFormat::score_and_feedback);

/// Line-delimited {input, target}.
std::string serialize_instruction_records(std::span<const InstructionRecord> records);

// ---------------------------------------------------------------------------
// Scoring

enum class LlmMode { zero_shot, finetuned_endpoint };

std::string_view to_string(LlmMode mode);
LlmMode llm_mode_from_string(std::string_view text);

struct LlmScorerOptions {
    std::string model_id;
    LlmMode mode = LlmMode::zero_shot;
    int parse_retries = 0; // extra completions requested after a ParseFailure
    std::optional<std::string> zero_shot_template;
    std::optional<std::string> instruction_template;
};

struct ScoringItem {
    std::string response_id;
    const Problem* problem = nullptr;
    std::string answer;
};

class LlmScorer {
public:
    LlmScorer(std::shared_ptr<CompletionProvider> provider, Rubric rubric, LlmScorerOptions options);

    std::string prompt_for(const Problem& problem, std::string_view answer) const;

    /// Builds the prompt, completes, parses. ParseFailure is retried up to
    /// parse_retries times and then rethrown; ProviderError propagates.
    ScoredFeedback predict(const Problem& problem, std::string_view answer, const CompletionParams& params) const;

    /// Scores every item, isolating failures per item. Calls run concurrently
    /// up to the provider's max_in_flight; results keep input order.
    std::vector<Prediction> predict_batch(std::span<const ScoringItem> items, const CompletionParams& params) const;

    const std::string& model_id() const { return options_.model_id; }
    LlmMode mode() const { return options_.mode; }

private:
    std::shared_ptr<CompletionProvider> provider_;
    Rubric rubric_;
    LlmScorerOptions options_;
    PromptTemplate zero_shot_;
    PromptTemplate instruction_;
};

// ---------------------------------------------------------------------------
// Inference-parameter tuning

inline constexpr double kParseFailurePenalty = 16.0;

struct GridPointResult {
    CompletionParams params;
    double mse = 0.0;
    std::size_t failed = 0;
};

struct TuneResult {
    CompletionParams best;
    std::size_t best_index = 0;
    std::vector<GridPointResult> grid;
};

/// Scores `validation` at every grid point and returns the point with the
/// lowest MSE against the teacher scores. Failed items contribute
/// `failure_penalty`; the first grid point wins ties. Throws DataError when
/// every item fails at every grid point.
TuneResult tune_inference_params(const LlmScorer& scorer, const Corpus& corpus,
                                 std::span<const GradedResponse> validation,
                                 std::span<const CompletionParams> grid,
                                 double failure_penalty = kParseFailurePenalty);

/// A deterministic `n`-item subset of `train` (all of it when smaller).
std::vector<GradedResponse> validation_subset(std::span<const GradedResponse> train, std::size_t n,
                                              std::uint64_t seed);

} // namespace openresp
