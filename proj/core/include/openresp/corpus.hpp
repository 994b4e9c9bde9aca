#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace openresp {

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 4;
inline constexpr std::size_t kScoreClasses = 5;

constexpr bool valid_score(int score) { return score >= kMinScore && score <= kMaxScore; }

struct Problem {
    std::string problem_id;
    std::string body;
    bool has_image = false;

    bool operator==(const Problem&) const = default;
};

struct StudentResponse {
    std::string response_id;
    std::string problem_id;
    std::string answer;
    bool has_image = false;

    bool operator==(const StudentResponse&) const = default;
};

struct TeacherAnnotation {
    std::string response_id;
    int score = 0;
    std::string feedback;
    std::string grader_id;

    bool operator==(const TeacherAnnotation&) const = default;
};

/// A response together with the teacher's grade for it.
struct GradedResponse {
    StudentResponse response;
    TeacherAnnotation annotation;

    bool operator==(const GradedResponse&) const = default;
};

/// Problems, responses and annotations with referential integrity: every
/// response names a problem in `problems`, every annotation a response in
/// `responses`, and each response has at most one annotation.
struct Corpus {
    std::vector<Problem> problems;
    std::vector<StudentResponse> responses;
    std::vector<TeacherAnnotation> annotations;

    bool operator==(const Corpus&) const = default;

    const Problem* find_problem(std::string_view problem_id) const;

    /// Responses joined with their annotation, in response order. Responses
    /// without an annotation are skipped.
    std::vector<GradedResponse> graded() const;
};

// ---------------------------------------------------------------------------
// Text cleaning

/// Unknown `&name;` entities left in cleaned text, by name.
struct CleaningReport {
    std::map<std::string, std::size_t> unknown_entities;

    void merge(const CleaningReport& other);
};

/// Strips HTML tags (block-level tags become a space), decodes the entity
/// table (named entities with or without ';', plus numeric `&#N;`/`&#xH;`),
/// collapses whitespace runs to one space and trims. Stripping and decoding
/// repeat until the text stops changing, so the result is a fixed point:
/// clean_text(clean_text(s)) == clean_text(s).
std::string clean_text(std::string_view raw);
std::string clean_text(std::string_view raw, CleaningReport& report);

/// The named entities clean_text decodes, as (name, replacement).
std::span<const std::pair<std::string_view, std::string_view>> entity_table();

// ---------------------------------------------------------------------------
// Parsing

struct Rejection {
    std::size_t line = 0; // 1-based line in the source stream
    std::string record_type;
    std::string id;
    std::string reason;
};

struct ParseResult {
    Corpus corpus;
    std::vector<Rejection> rejected;
    CleaningReport cleaning;
};

/// Parses line-delimited JSON records. Bad records are collected in
/// `rejected` rather than aborting; records whose parent was rejected are
/// rejected in turn. Blank lines are ignored.
ParseResult parse_corpus(std::string_view jsonl);

/// Serializes in the same line-delimited schema: problems, then responses,
/// then annotations, each in stored order.
std::string serialize_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Filtering

struct FilterResult {
    Corpus corpus;
    std::size_t image_problems_removed = 0;
    std::size_t responses_of_image_problems_removed = 0;
    std::size_t image_responses_removed = 0;
    std::size_t annotations_removed = 0;
};

/// Drops image problems, their responses, image responses, and annotations
/// of any dropped response.
FilterResult filter_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Splitting

struct CorpusSplit {
    std::vector<GradedResponse> train;
    std::vector<GradedResponse> test;
    std::uint64_t seed = 0;
    double ratio = 0.8;
};

/// Number of training items for a group of `n`: round(ratio * n), halves
/// rounded toward train.
std::size_t train_count(std::size_t n, double ratio);

/// Stratified per-problem split. Within each problem the items are ordered by
/// response_id and shuffled with a stream derived from (seed, problem_id), so
/// membership depends only on the problem's own items and the seed.
/// Output is grouped by problem_id (lexicographic), shuffled order within.
/// Throws DataError "problem too small to split" for groups of fewer than 2,
/// ConfigError for ratio outside (0,1).
CorpusSplit split_per_problem(std::span<const GradedResponse> items, double ratio, std::uint64_t seed);

/// {seed, ratio, train: [response_id...], test: [...]} as pretty JSON.
std::string split_manifest_json(const CorpusSplit& split);

/// Builds a corpus holding only the given pairs and the problems they use
/// (problem order preserved from `source`).
Corpus subset_corpus(const Corpus& source, std::span<const GradedResponse> pairs);

/// Counts per score class 0..4.
std::array<std::size_t, kScoreClasses> score_distribution(std::span<const TeacherAnnotation> annotations);

} // namespace openresp
