#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openresp/corpus.hpp"
#include "openresp/prediction.hpp"

namespace openresp {

struct Candidate {
    std::string slot_id;
    std::string model_id; // never sent to raters
    std::string feedback;

    bool operator==(const Candidate&) const = default;
};

struct EvalItem {
    std::string item_id;
    std::string problem_id;
    std::string response_id;
    std::string problem_body;
    std::string answer;
    int teacher_score = 0;
    std::vector<Candidate> candidates; // slot order A, B, C, ...

    bool operator==(const EvalItem&) const = default;

    const Candidate* find_slot(std::string_view slot_id) const;
};

struct SlotRating {
    int accuracy = 0;   // 0 | 1
    int relevancy = 0;  // 0 | 1
    int motivation = 0; // -1 | 0 | 1

    bool operator==(const SlotRating&) const = default;
};

struct RaterJudgment {
    std::string rater_id;
    std::string item_id;
    std::map<std::string, SlotRating> ratings; // by slot_id
    std::set<std::string> preferred_slots;

    bool operator==(const RaterJudgment&) const = default;
};

/// Picks `per_problem` test answers per problem (seeded, per-problem
/// streams), ordered by problem_id. Item ids are "item-001", ... Throws
/// DataError naming every problem whose pool is too small.
std::vector<EvalItem> sample_eval_set(const Corpus& corpus, std::span<const GradedResponse> test,
                                      std::size_t per_problem, std::uint64_t seed);

/// Adds one candidate per model to every item. The model-to-slot assignment
/// is shuffled per item with a stream derived from (seed, item_id). Throws
/// DataError when a model has no successful prediction for an item.
void attach_candidates(std::vector<EvalItem>& items,
                       const std::map<std::string, std::vector<Prediction>>& predictions_by_model,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Consensus rules

/// 1 iff every rater gave 1. Throws DataError for an empty rating list.
int consensus_binary(std::span<const int> ratings);

struct MotivationFlags {
    int motivating = 0;
    int demotivating = 0;

    bool operator==(const MotivationFlags&) const = default;
};

/// motivating iff any rater gave +1, demotivating iff any rater gave -1.
MotivationFlags motivation_flags(std::span<const int> ratings);

// ---------------------------------------------------------------------------
// Sessions

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a rater resubmits an item with different ratings.
class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RecordOutcome { stored, duplicate };

struct Progress {
    std::size_t done = 0;
    std::size_t total = 0;
};

/// A blind rating session. Each rater walks the items in an independently
/// shuffled order. Recording is serialized; re-submitting an identical
/// judgment is accepted without storing a second copy.
class RatingSession {
public:
    struct Data {
        std::string session_id;
        std::uint64_t seed = 0;
        std::size_t per_problem = 0;
        std::vector<std::string> model_ids;
        std::vector<std::string> rater_ids;
        std::vector<EvalItem> items;
        std::map<std::string, std::vector<std::string>> presentation_order; // rater -> item_ids
        std::vector<RaterJudgment> judgments;

        bool operator==(const Data&) const = default;
    };

    /// Builds the per-rater presentation orders from (seed, rater_id).
    static RatingSession create(std::string session_id, std::vector<EvalItem> items,
                                std::vector<std::string> model_ids, std::vector<std::string> rater_ids,
                                std::uint64_t seed, std::size_t per_problem);

    /// Validates structure (unique ids, orders are permutations, judgments
    /// reference known raters/items/slots). Throws DataError.
    explicit RatingSession(Data data);

    RatingSession(const RatingSession& other);
    RatingSession& operator=(const RatingSession&) = delete;

    const std::string& id() const { return data_.session_id; }

    /// Next unjudged item in the rater's order; nullopt when finished.
    /// Throws ValidationError for an unknown rater.
    std::optional<EvalItem> next_item(std::string_view rater_id) const;

    RecordOutcome record(const RaterJudgment& judgment);

    Progress progress(std::string_view rater_id) const;
    bool complete() const;

    /// (rater, item) pairs still lacking a judgment.
    std::vector<std::pair<std::string, std::string>> missing() const;

    Data snapshot() const;

    /// Full export including the model/slot map.
    std::string to_json() const;
    static RatingSession from_json(std::string_view text);

private:
    void check_judgment(const RaterJudgment& judgment) const;

    mutable std::mutex mutex_;
    Data data_;
};

/// Rater-facing JSON for one item: {item_id, problem, answer, teacher_score,
/// slots: [{slot_id, feedback}], progress: {done, total}}. No model ids.
std::string rater_view_json(const EvalItem& item, Progress progress);

/// {rater_id, item_id, ratings: {slot: {accuracy, relevancy, motivation}}, preferred: [slot...]}.
std::string judgment_to_json(const RaterJudgment& judgment);

/// Inverse of judgment_to_json. Throws ValidationError on malformed input.
RaterJudgment parse_judgment(std::string_view text);

/// True when any model id appears in `payload` as a substring.
bool mentions_any(std::string_view payload, std::span<const std::string> model_ids);

// ---------------------------------------------------------------------------
// Reports

struct RaterCounts {
    std::size_t accurate = 0;
    std::size_t relevant = 0;
    std::size_t motivating = 0;
    std::size_t demotivating = 0;
    std::size_t preferred = 0;

    bool operator==(const RaterCounts&) const = default;
};

struct ModelConsensus {
    std::size_t accuracy_consensus = 0;
    std::size_t relevancy_consensus = 0;
    std::size_t motivating = 0;
    std::size_t demotivating = 0;
    std::map<std::string, RaterCounts> per_rater;
    double preference_percent = 0.0;

    bool operator==(const ModelConsensus&) const = default;
};

struct PreferenceTally {
    std::map<std::string, std::map<std::string, std::size_t>> counts; // rater -> model -> points
    std::map<std::string, double> averaged_percent;                     // model -> percent
    std::size_t n_items = 0;

    bool operator==(const PreferenceTally&) const = default;
};

/// One point per preferred slot per judgment (two identical messages both
/// preferred credit both models). Averaged percent per model is the mean
/// over raters of points / n_items * 100.
PreferenceTally preference_tally(const RatingSession::Data& session);

/// Same arithmetic from raw per-rater counts.
PreferenceTally preference_tally_from_counts(const std::map<std::string, std::map<std::string, std::size_t>>& counts,
                                             std::size_t n_items);

struct ConsensusReport {
    std::vector<std::string> model_ids;
    std::vector<std::string> rater_ids;
    std::size_t n_items = 0;
    std::map<std::string, ModelConsensus> models;
    PreferenceTally preference;

    bool operator==(const ConsensusReport&) const = default;
};

/// Throws DataError listing missing (rater, item) pairs when incomplete.
ConsensusReport build_consensus_report(const RatingSession::Data& session);

std::string consensus_report_to_json(const ConsensusReport& report);

/// Evaluator x model tables for accuracy, relevancy, motivation,
/// demotivation and preference, each with a consensus (or average) row.
std::string render_consensus_tables(const ConsensusReport& report);

} // namespace openresp
