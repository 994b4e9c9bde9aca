#pragma once

// Synthetic corpora and scratch directories shared by the test binaries.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "openresp/corpus.hpp"

namespace fixtures {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                fmt::format("openresp-test-{}-{}", static_cast<long>(::getpid()), counter++);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words{
        "the",   "slope", "is",    "rate",     "of",    "change", "divide", "by",     "multiply", "area",
        "equal", "to",    "half",  "triangle", "graph", "line",   "points", "x",      "y",        "because",
        "I",     "added", "both",  "sides",    "ratio", "table",  "double", "answer", "units",    "square"};
    return words;
}

inline const std::vector<std::string>& feedback_phrases() {
    static const std::vector<std::string> phrases{
        "Nice work, your reasoning is clear.",
        "Check your units in the last step.",
        "Explain why you divided here.",
        "Good start; finish the calculation.",
        "Please show your work next time.",
    };
    return phrases;
}

/// Problems "pNN" with `per_problem` graded answers "pNN-rNNN". Scores are
/// drawn uniformly; answers are random word strings so embeddings differ.
inline openresp::Corpus synthetic_corpus(std::size_t problems, std::size_t per_problem, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto& words = vocabulary();
    openresp::Corpus c;
    for (std::size_t p = 0; p < problems; ++p) {
        const auto pid = fmt::format("p{:02}", p + 1);
        c.problems.push_back({pid, fmt::format("Problem {}: find the slope of the line through two points.", p + 1), false});
        for (std::size_t r = 0; r < per_problem; ++r) {
            const auto rid = fmt::format("{}-r{:03}", pid, r + 1);
            std::string answer;
            const auto len = 3 + rng() % 8;
            for (std::size_t w = 0; w < len; ++w) {
                if (!answer.empty()) answer += ' ';
                answer += words[rng() % words.size()];
            }
            const int score = static_cast<int>(rng() % 5);
            c.responses.push_back({rid, pid, answer, false});
            c.annotations.push_back({rid, score, feedback_phrases()[rng() % feedback_phrases().size()], "t1"});
        }
    }
    return c;
}

/// Corpus whose annotation scores follow `counts` exactly (class k repeated counts[k] times).
inline openresp::Corpus corpus_with_distribution(const std::array<std::size_t, 5>& counts, std::size_t problems) {
    openresp::Corpus c;
    for (std::size_t p = 0; p < problems; ++p) c.problems.push_back({fmt::format("p{:02}", p + 1), "Body", false});
    std::size_t n = 0;
    for (int score = 0; score < 5; ++score) {
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(score)]; ++k, ++n) {
            const auto pid = c.problems[n % problems].problem_id;
            const auto rid = fmt::format("r{:05}", n);
            c.responses.push_back({rid, pid, "answer " + std::to_string(n), false});
            c.annotations.push_back({rid, score, "", ""});
        }
    }
    return c;
}

} // namespace fixtures
