#pragma once

// A two-rater, 100-item session whose judgments yield fixed per-rater and
// combined counts for every rating scale and for preferences.

#include <array>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "openresp/feedback_eval.hpp"

namespace fixtures {

inline const std::vector<std::string>& table_models() {
    static const std::vector<std::string> models{"sbert-canberra", "goat-finetuned", "gpt4-zero-shot"};
    return models;
}

inline const std::vector<std::string>& table_raters() {
    static const std::vector<std::string> raters{"teacher-1", "teacher-2"};
    return raters;
}

struct PairRow {
    std::size_t first;
    std::size_t second;
    std::size_t combined; // both for binary aspects, either for motivation flags
};

struct TableTargets {
    std::array<PairRow, 3> accuracy{{{57, 85, 52}, {69, 91, 68}, {89, 96, 86}}};
    std::array<PairRow, 3> relevancy{{{84, 90, 76}, {91, 96, 88}, {93, 97, 91}}};
    std::array<PairRow, 3> motivating{{{45, 40, 46}, {47, 36, 48}, {52, 27, 52}}};
    std::array<PairRow, 3> demotivating{{{11, 0, 11}, {5, 4, 5}, {0, 1, 1}}};
};

namespace detail {

// Rater 1 covers [0, a); rater 2 covers [a - both, a - both + b).
inline bool binary_member(const PairRow& r, std::size_t rater, std::size_t i) {
    if (rater == 0) return i < r.first;
    const auto start = r.first - r.combined;
    return i >= start && i < start + r.second;
}

inline bool motivating_member(const PairRow& r, std::size_t rater, std::size_t i) {
    if (rater == 0) return i < r.first;
    const auto overlap = r.first + r.second - r.combined;
    const auto start = r.first - overlap;
    return i >= start && i < start + r.second;
}

inline bool demotivating_member(const PairRow& r, std::size_t rater, std::size_t i, std::size_t n) {
    if (rater == 0) return i >= n - r.first;
    const auto overlap = r.first + r.second - r.combined;
    const auto start = n - r.first - (r.second - overlap);
    return i >= start && i < start + r.second;
}

} // namespace detail

/// Items 0..2 carry identical SBERT and GOAT feedback and teacher-1
/// prefers both, which yields the 15/19/69 and 9/5/86 preference rows.
inline openresp::RatingSession::Data table_session(const TableTargets& t = {}) {
    constexpr std::size_t n = 100;
    const auto& models = table_models();
    const auto& raters = table_raters();
    const std::array<std::string, 3> slots{"A", "B", "C"};

    std::vector<openresp::EvalItem> items;
    for (std::size_t i = 0; i < n; ++i) {
        openresp::EvalItem item;
        item.item_id = fmt::format("item-{:03}", i + 1);
        item.problem_id = fmt::format("p{:02}", i / 2 + 1);
        item.response_id = fmt::format("{}-r{:03}", item.problem_id, i % 2 + 1);
        item.problem_body = "Problem " + item.problem_id;
        item.answer = "answer " + std::to_string(i);
        item.teacher_score = static_cast<int>(i % 5);
        for (std::size_t m = 0; m < 3; ++m) {
            std::string feedback = fmt::format("feedback {} from slot model {}", i, m);
            if (i < 3 && m < 2) feedback = fmt::format("shared feedback {}", i);
            item.candidates.push_back({slots[(m + i) % 3], models[m], feedback});
        }
        std::sort(item.candidates.begin(), item.candidates.end(),
                  [](const auto& a, const auto& b) { return a.slot_id < b.slot_id; });
        items.push_back(std::move(item));
    }

    auto slot_of = [&](std::size_t i, std::size_t m) { return slots[(m + i) % 3]; };

    openresp::RatingSession::Data data;
    data.session_id = "tables";
    data.seed = 1;
    data.per_problem = 2;
    data.model_ids = models;
    data.rater_ids = raters;
    data.items = items;
    for (const auto& rater : raters) {
        auto& order = data.presentation_order[rater];
        for (const auto& item : items) order.push_back(item.item_id);
    }
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            openresp::RaterJudgment j;
            j.rater_id = raters[r];
            j.item_id = items[i].item_id;
            for (std::size_t m = 0; m < 3; ++m) {
                openresp::SlotRating rating;
                rating.accuracy = detail::binary_member(t.accuracy[m], r, i);
                rating.relevancy = detail::binary_member(t.relevancy[m], r, i);
                if (detail::motivating_member(t.motivating[m], r, i)) rating.motivation = 1;
                if (detail::demotivating_member(t.demotivating[m], r, i, n)) rating.motivation = -1;
                j.ratings[slot_of(i, m)] = rating;
            }
            std::size_t preferred = 2;
            if (r == 0) {
                if (i < 3) {
                    j.preferred_slots.insert(slot_of(i, 0));
                    j.preferred_slots.insert(slot_of(i, 1));
                    data.judgments.push_back(j);
                    continue;
                }
                if (i < 15) preferred = 0;
                else if (i < 31) preferred = 1;
            } else {
                if (i < 9) preferred = 0;
                else if (i < 14) preferred = 1;
            }
            j.preferred_slots.insert(slot_of(i, preferred));
            data.judgments.push_back(j);
        }
    }
    return data;
}

} // namespace fixtures
