#include "openresp/llm_scorer.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <thread>

#include "openresp/errors.hpp"
#include "openresp/random.hpp"

namespace openresp {

namespace {

const std::string kZeroShotTemplate =
    "You are a middle school math teacher, giving helpful feedback to students on their mathematical reasoning "
    "on open-response questions. Keep your feedback direct, under 50 words, and do not give away the answer in "
    "your feedback.\n"
    "Problem:\n"
    "{body}\n"
    "Student's Answer:\n"
    "{value}\n"
    "Scoring Rubric:\n"
    "{rubric}";

const std::string kInstructionTemplate =
    "Below is a student's answer to an open-response math problem. Grade it on a 0-4 scale using the scoring "
    "rubric, then write direct feedback for the student in under 50 words without giving away the answer.\n"
    "\n"
    "Scoring Rubric:\n"
    "{rubric}\n"
    "\n"
    "Problem:\n"
    "{body}\n"
    "\n"
    "Student's Answer:\n"
    "{value}\n"
    "\n"
    "Respond with a line \"Score: <0-4>\" followed by a line \"Feedback: <feedback>\".";

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(kWhitespace);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(kWhitespace);
    return s.substr(b, e - b + 1);
}

bool iequals_prefix(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i]) return false;
    }
    return true;
}

// For "**Score:** 3" style lines returns the text after the colon; nullopt
// when the line does not carry `label` (lower-case).
std::optional<std::string_view> labelled(std::string_view line, std::string_view label) {
    std::size_t i = 0;
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == '*' || line[i] == '#' ||
                               line[i] == '>' || line[i] == '_')) {
        ++i;
    }
    line.remove_prefix(i);
    if (!iequals_prefix(line, label)) return std::nullopt;
    line.remove_prefix(label.size());
    i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '*' || line[i] == '_')) ++i;
    if (i >= line.size() || line[i] != ':') return std::nullopt;
    line.remove_prefix(i + 1);
    i = 0;
    while (i < line.size() && (line[i] == '*' || line[i] == '_')) ++i;
    return line.substr(i);
}

struct Line {
    std::size_t begin; // offset in raw
    std::size_t end;   // offset one past the last character, excluding '\n'
};

std::vector<Line> lines_of(std::string_view raw) {
    std::vector<Line> lines;
    std::size_t start = 0;
    for (;;) {
        auto nl = raw.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back({start, raw.size()});
            break;
        }
        lines.push_back({start, nl});
        start = nl + 1;
    }
    return lines;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Parses a leading (optionally negative) integer token from `text`.
// Returns the value and the number of characters consumed.
std::optional<std::pair<long long, std::size_t>> leading_integer(std::string_view text) {
    std::size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
        negative = text[i] == '-';
        ++i;
    }
    const std::size_t digits = i;
    while (i < text.size() && is_digit(text[i]) && i - digits < 9) ++i;
    if (i == digits) return std::nullopt;
    if (i < text.size() && is_digit(text[i])) return std::nullopt; // absurdly long number
    if (i + 1 < text.size() && (text[i] == '.' || text[i] == ',') && is_digit(text[i + 1])) return std::nullopt;
    long long value = std::stoll(std::string(text.substr(digits, i - digits)));
    return std::make_pair(negative ? -value : value, i);
}

int checked_score(long long value) {
    if (value < kMinScore || value > kMaxScore) {
        throw ParseFailure(fmt::format("score {} is outside {}..{}", value, kMinScore, kMaxScore));
    }
    return static_cast<int>(value);
}

std::map<std::string, std::string, std::less<>> prompt_values(const Problem& problem, std::string_view answer,
                                                              const Rubric& rubric) {
    return {{"body", problem.body}, {"value", std::string(answer)}, {"rubric", rubric.render()}};
}

} // namespace

// ---------------------------------------------------------------------------
// Rubric

Rubric::Rubric(std::vector<RubricTier> tiers) : tiers_(std::move(tiers)) {
    if (tiers_.size() != 5) throw ConfigError("rubric must have exactly 5 tiers");
    std::set<int> seen;
    for (const auto& t : tiers_) {
        if (!valid_score(t.points) || !seen.insert(t.points).second) {
            throw ConfigError("rubric tiers must carry the point values 4, 3, 2, 1, 0 once each");
        }
        if (trim(t.criterion).empty()) throw ConfigError("rubric tier criterion must not be empty");
    }
    std::sort(tiers_.begin(), tiers_.end(), [](const RubricTier& a, const RubricTier& b) { return a.points > b.points; });
}

Rubric Rubric::illustrative_math() {
    return Rubric({
        {4, "their work is complete and correct, with complete explanation or justification."},
        {3, "their work shows good conceptual understanding and mastery, with either minor errors or correct work "
            "with insufficient explanation or justification."},
        {2, "their work shows a developing but incomplete conceptual understanding, with significant errors."},
        {1, "their work includes major errors or omissions that demonstrate a lack of conceptual understanding and "
            "mastery."},
        {0, "they do not attempt the problem at all."},
    });
}

std::string Rubric::render() const {
    std::string out;
    for (std::size_t i = 0; i < tiers_.size(); ++i) {
        if (i > 0) out += '\n';
        out += fmt::format("{}. Students should get {} point{} if {}", i + 1, tiers_[i].points,
                           tiers_[i].points == 1 ? "" : "s", tiers_[i].criterion);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Templates

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
    std::string literal;
    std::size_t i = 0;
    while (i < text_.size()) {
        if (text_[i] == '{') {
            std::size_t j = i + 1;
            while (j < text_.size() && (std::islower(static_cast<unsigned char>(text_[j])) || text_[j] == '_')) ++j;
            if (j > i + 1 && j < text_.size() && text_[j] == '}') {
                if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
                literal.clear();
                auto name = text_.substr(i + 1, j - i - 1);
                ++counts_[name];
                pieces_.push_back({true, std::move(name)});
                i = j + 1;
                continue;
            }
        }
        literal.push_back(text_[i++]);
    }
    if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    for (const auto& piece : pieces_) {
        if (!piece.placeholder) {
            out += piece.text;
            continue;
        }
        auto it = values.find(piece.text);
        if (it == values.end()) throw TemplateError("unsubstituted placeholder {" + piece.text + "}");
        out += it->second;
    }
    return out;
}

void PromptTemplate::require_once(std::initializer_list<std::string_view> names) const {
    for (auto name : names) {
        auto it = counts_.find(name);
        const int n = it == counts_.end() ? 0 : it->second;
        if (n != 1) {
            throw TemplateError(fmt::format("template must contain {{{}}} exactly once (found {})", name, n));
        }
    }
}

const std::string& default_zero_shot_template() { return kZeroShotTemplate; }
const std::string& default_instruction_template() { return kInstructionTemplate; }

std::string build_zero_shot_prompt(const Problem& problem, std::string_view answer, const Rubric& rubric,
                                   const PromptTemplate& tmpl) {
    tmpl.require_once({"body", "value"});
    return tmpl.render(prompt_values(problem, answer, rubric));
}

std::string build_zero_shot_prompt(const Problem& problem, std::string_view answer, const Rubric& rubric) {
    static const PromptTemplate tmpl(kZeroShotTemplate);
    return build_zero_shot_prompt(problem, answer, rubric, tmpl);
}

// ---------------------------------------------------------------------------
// Output grammar

std::string format_model_output(int score, std::string_view feedback, TargetFormat format) {
    if (format == TargetFormat::score_only) return fmt::format("Score: {}", score);
    return fmt::format("Score: {}\nFeedback: {}", score, feedback);
}

ParsedOutput parse_model_output(std::string_view raw) {
    if (trim(raw).empty()) throw ParseFailure("empty model output");
    const auto lines = lines_of(raw);
    auto text_of = [&](const Line& l) { return raw.substr(l.begin, l.end - l.begin); };

    std::optional<std::size_t> score_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (labelled(text_of(lines[i]), "score")) {
            score_line = i;
            break;
        }
    }

    if (score_line) {
        const auto rest = trim(*labelled(text_of(lines[*score_line]), "score"));
        const auto number = leading_integer(rest);
        if (!number) throw ParseFailure("score is not an integer: " + std::string(rest));
        ParsedOutput out{checked_score(number->first), {}};

        // "Score: 3 Feedback: ..." on one line.
        const auto tail = rest.substr(number->second);
        for (std::size_t k = 0; k < tail.size(); ++k) {
            if (auto value = labelled(tail.substr(k), "feedback"); value && (k == 0 || tail[k - 1] == ' ')) {
                const auto after = lines[*score_line].end;
                out.feedback = std::string(trim(std::string(*value) + std::string(raw.substr(after))));
                return out;
            }
        }

        std::optional<std::size_t> feedback_line;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i != *score_line && labelled(text_of(lines[i]), "feedback")) {
                feedback_line = i;
                break;
            }
        }
        if (!feedback_line) {
            out.feedback = std::string(trim(raw.substr(std::min(raw.size(), lines[*score_line].end))));
        } else {
            const auto& fl = lines[*feedback_line];
            const auto first = *labelled(text_of(fl), "feedback");
            const std::size_t first_offset = static_cast<std::size_t>(first.data() - raw.data());
            const std::size_t stop = *feedback_line < *score_line ? lines[*score_line].begin : raw.size();
            out.feedback = std::string(trim(raw.substr(first_offset, stop - first_offset)));
        }
        return out;
    }

    // Fallback: first standalone integer on the first non-blank line.
    std::size_t first = 0;
    while (first < lines.size() && trim(text_of(lines[first])).empty()) ++first;
    const auto line = text_of(lines[first]);
    std::size_t i = 0;
    while (i < line.size()) {
        if (!is_digit(line[i])) {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end < line.size() && is_digit(line[run_end])) ++run_end;
        std::size_t start = i;
        if (start > 0 && (line[start - 1] == '-' || line[start - 1] == '+')) --start;
        auto glued = [&](std::size_t k) {
            return std::isalnum(static_cast<unsigned char>(line[k])) || line[k] == '_';
        };
        const bool glued_before = start > 0 && (glued(start - 1) || line[start - 1] == '.');
        const bool glued_after =
            run_end < line.size() &&
            (glued(run_end) ||
             ((line[run_end] == '.' || line[run_end] == ',') && run_end + 1 < line.size() && is_digit(line[run_end + 1])));
        if (glued_before || glued_after) {
            i = run_end;
            continue;
        }
        if (run_end - i > 9) throw ParseFailure("score " + std::string(line.substr(start, run_end - start)) + " is out of range");
        const auto value = std::stoll(std::string(line.substr(i, run_end - i)));
        ParsedOutput out{checked_score(line[start] == '-' ? -value : value), {}};
        out.feedback = std::string(trim(raw.substr(lines[first].begin + run_end)));
        return out;
    }
    throw ParseFailure("no score found in model output");
}

// ---------------------------------------------------------------------------
// Instruction records

InstructionRecord build_instruction_record(const Problem& problem, std::string_view answer,
                                           const TeacherAnnotation& annotation, const Rubric& rubric,
                                           TargetFormat format) {
    static const PromptTemplate tmpl(kInstructionTemplate);
    return {tmpl.render(prompt_values(problem, answer, rubric)),
            format_model_output(annotation.score, annotation.feedback, format)};
}

std::vector<InstructionRecord> build_instruction_records(const Corpus& corpus, std::span<const GradedResponse> pairs,
                                                         const Rubric& rubric, TargetFormat format) {
    std::vector<InstructionRecord> records;
    records.reserve(pairs.size());
    for (const auto& g : pairs) {
        const auto* problem = corpus.find_problem(g.response.problem_id);
        if (!problem) throw DataError("unknown problem " + g.response.problem_id);
        records.push_back(build_instruction_record(*problem, g.response.answer, g.annotation, rubric, format));
    }
    return records;
}

std::string serialize_instruction_records(std::span<const InstructionRecord> records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json j{{"input", r.input}, {"target", r.target}};
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scoring

std::string_view to_string(LlmMode mode) { return mode == LlmMode::zero_shot ? "zero_shot" : "finetuned"; }

LlmMode llm_mode_from_string(std::string_view text) {
    if (text == "zero_shot") return LlmMode::zero_shot;
    if (text == "finetuned" || text == "finetuned_endpoint") return LlmMode::finetuned_endpoint;
    throw ConfigError("unknown LLM mode " + std::string(text) + " (expected zero_shot or finetuned)");
}

LlmScorer::LlmScorer(std::shared_ptr<CompletionProvider> provider, Rubric rubric, LlmScorerOptions options)
    : provider_(std::move(provider)),
      rubric_(std::move(rubric)),
      options_(std::move(options)),
      zero_shot_(options_.zero_shot_template.value_or(kZeroShotTemplate)),
      instruction_(options_.instruction_template.value_or(kInstructionTemplate)) {
    if (!provider_) throw ConfigError("LLM scorer requires a completion provider");
    if (options_.parse_retries < 0) throw ConfigError("parse_retries must be >= 0");
    if (options_.model_id.empty()) options_.model_id = provider_->id();
    zero_shot_.require_once({"body", "value"});
    instruction_.require_once({"body", "value"});
}

std::string LlmScorer::prompt_for(const Problem& problem, std::string_view answer) const {
    const auto& tmpl = options_.mode == LlmMode::zero_shot ? zero_shot_ : instruction_;
    return tmpl.render(prompt_values(problem, answer, rubric_));
}

ScoredFeedback LlmScorer::predict(const Problem& problem, std::string_view answer,
                                  const CompletionParams& params) const {
    const auto prompt = prompt_for(problem, answer);
    for (int attempt = 0;; ++attempt) {
        auto result = provider_->complete(prompt, params);
        try {
            auto parsed = parse_model_output(result.text);
            return {options_.model_id, parsed.score, std::move(parsed.feedback), std::move(result.text),
                    static_cast<std::int64_t>(result.latency.count())};
        } catch (const ParseFailure& e) {
            if (attempt >= options_.parse_retries) throw;
            spdlog::debug("{}: unparseable output ({}), requesting again", options_.model_id, e.what());
        }
    }
}

std::vector<Prediction> LlmScorer::predict_batch(std::span<const ScoringItem> items,
                                                 const CompletionParams& params) const {
    std::vector<Prediction> results(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            const auto& item = items[i];
            auto& out = results[i];
            out.response_id = item.response_id;
            out.model_id = options_.model_id;
            try {
                if (!item.problem) throw DataError("unknown problem for response " + item.response_id);
                out.problem_id = item.problem->problem_id;
                out.scored = predict(*item.problem, item.answer, params);
            } catch (const ParseFailure& e) {
                out.failure = FailureKind::parse;
                out.error = e.what();
            } catch (const ProviderError& e) {
                out.failure = FailureKind::provider;
                out.error = e.what();
            } catch (const std::exception& e) {
                out.failure = FailureKind::data;
                out.error = e.what();
            }
            if (!out.ok()) spdlog::debug("{}: item {} failed: {}", options_.model_id, item.response_id, out.error);
        }
    };
    const auto n_workers = std::min<std::size_t>(std::max<std::size_t>(provider_->max_in_flight(), 1), items.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    return results;
}

// ---------------------------------------------------------------------------
// Tuning

TuneResult tune_inference_params(const LlmScorer& scorer, const Corpus& corpus,
                                 std::span<const GradedResponse> validation, std::span<const CompletionParams> grid,
                                 double failure_penalty) {
    if (validation.empty()) throw DataError("validation set is empty");
    if (grid.empty()) throw ConfigError("parameter grid is empty");

    std::vector<ScoringItem> items;
    items.reserve(validation.size());
    for (const auto& g : validation) {
        items.push_back({g.response.response_id, corpus.find_problem(g.response.problem_id), g.response.answer});
    }

    TuneResult result;
    bool any_parsed = false;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        grid[k].validate();
        const auto predictions = scorer.predict_batch(items, grid[k]);
        double total = 0.0;
        std::size_t failed = 0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            if (!predictions[i].ok()) {
                ++failed;
                total += failure_penalty;
                continue;
            }
            const double diff = predictions[i].scored->score - validation[i].annotation.score;
            total += diff * diff;
        }
        any_parsed = any_parsed || failed < predictions.size();
        const double mse = total / static_cast<double>(predictions.size());
        result.grid.push_back({grid[k], mse, failed});
        if (k == 0 || mse < result.grid[result.best_index].mse) result.best_index = k;
        spdlog::info("tune: {} -> mse={:.4f} failed={}", grid[k].to_string(), mse, failed);
    }
    if (!any_parsed) throw DataError("every validation item failed at every grid point");
    result.best = result.grid[result.best_index].params;
    return result;
}

std::vector<GradedResponse> validation_subset(std::span<const GradedResponse> train, std::size_t n,
                                              std::uint64_t seed) {
    std::vector<GradedResponse> pool(train.begin(), train.end());
    std::sort(pool.begin(), pool.end(), [](const GradedResponse& a, const GradedResponse& b) {
        return a.response.response_id < b.response.response_id;
    });
    auto rng = SeededRng::derive(seed, "validation");
    rng.shuffle(std::span<GradedResponse>(pool));
    if (pool.size() > n) pool.resize(n);
    return pool;
}

} // namespace openresp
