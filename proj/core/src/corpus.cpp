#include "openresp/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

#include "openresp/errors.hpp"
#include "openresp/io.hpp"
#include "openresp/random.hpp"

namespace openresp {

namespace {

using ordered_json = nlohmann::ordered_json;

// Every replacement is shorter than its source ("&" + name), which makes the
// strip/decode iteration in clean_text strictly shrinking and so finite.
constexpr std::pair<std::string_view, std::string_view> kEntities[] = {
    {"ge", ">="},    {"le", "<="},     {"gt", ">"},       {"lt", "<"},      {"amp", "&"},
    {"ne", "!="},    {"nbsp", " "},    {"quot", "\""},    {"apos", "'"},    {"minus", "-"},
    {"times", "*"},  {"divide", "/"},  {"plusmn", "+/-"}, {"deg", "°"}, {"pi", "pi"},
    {"frac12", "1/2"}, {"frac14", "1/4"}, {"frac34", "3/4"}, {"sup2", "^2"}, {"sup3", "^3"},
    {"radic", "sqrt"}, {"asymp", "~="}, {"middot", "*"},  {"hellip", "..."}, {"ndash", "-"},
    {"mdash", "-"},  {"lsquo", "'"},   {"rsquo", "'"},    {"ldquo", "\""},  {"rdquo", "\""},
};

const std::set<std::string, std::less<>>& block_tags() {
    static const std::set<std::string, std::less<>> tags = {
        "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "fieldset",
        "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header",
        "hr", "li", "main", "nav", "ol", "p", "pre", "section", "table", "tbody", "td", "tfoot",
        "th", "thead", "tr", "ul", "img", "iframe", "video", "audio",
    };
    return tags;
}

const std::set<std::string, std::less<>>& inline_tags() {
    static const std::set<std::string, std::less<>> tags = {
        "a", "abbr", "b", "big", "body", "button", "caption", "center", "code", "col", "colgroup",
        "del", "em", "font", "head", "html", "i", "input", "ins", "label", "link", "mark", "meta",
        "option", "q", "s", "select", "small", "source", "span", "strike", "strong", "sub", "sup",
        "textarea", "title", "tt", "u", "math", "mi", "mn", "mo", "mrow", "msup", "mfrac", "msqrt",
        "semantics", "annotation", "svg", "script", "style",
    };
    return tags;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Returns the index one past a closing "</name ...>" for raw-text elements,
// or npos.
std::size_t find_closing(std::string_view text, std::size_t from, std::string_view name) {
    const auto haystack = lower(text.substr(from));
    const auto needle = "</" + std::string(name);
    auto pos = haystack.find(needle);
    if (pos == std::string::npos) return std::string_view::npos;
    auto close = haystack.find('>', pos);
    if (close == std::string::npos) return std::string_view::npos;
    return from + close + 1;
}

std::string strip_tags(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        const char c = in[i];
        if (c != '<' || i + 1 >= in.size()) {
            out.push_back(c);
            ++i;
            continue;
        }
        const char next = in[i + 1];
        if (in.substr(i, 4) == "<!--") {
            auto end = in.find("-->", i + 4);
            if (end == std::string_view::npos) {
                out.push_back(c);
                ++i;
                continue;
            }
            i = end + 3;
            continue;
        }
        if (next == '!' || next == '?') {
            auto end = in.find('>', i + 2);
            if (end == std::string_view::npos) {
                out.push_back(c);
                ++i;
                continue;
            }
            i = end + 1;
            continue;
        }
        const bool closing = next == '/';
        std::size_t name_start = i + 1 + (closing ? 1 : 0);
        std::size_t name_end = name_start;
        while (name_end < in.size() && is_alnum(in[name_end])) ++name_end;
        const auto name = lower(in.substr(name_start, name_end - name_start));
        const bool known = !name.empty() && is_alpha(in[name_start]) &&
                           (block_tags().contains(name) || inline_tags().contains(name));
        const bool well_formed = name_end < in.size() &&
                                 (in[name_end] == '>' || in[name_end] == '/' || is_space(in[name_end]));
        auto end = known && well_formed ? in.find('>', name_end) : std::string_view::npos;
        if (end == std::string_view::npos) {
            out.push_back(c);
            ++i;
            continue;
        }
        i = end + 1;
        if (!closing && (name == "script" || name == "style")) {
            auto after = find_closing(in, i, name);
            i = after == std::string_view::npos ? in.size() : after;
            continue;
        }
        if (block_tags().contains(name)) {
            out.push_back(' ');
        } else if (name == "sup" && !closing) {
            out.push_back('^');
        }
    }
    return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string_view lookup_entity(std::string_view name) {
    for (const auto& [key, value] : kEntities) {
        if (key == name) return value;
    }
    return {};
}

// Decodes a numeric reference starting at in[i] == '&', in[i+1] == '#'.
// Returns the number of bytes consumed, 0 when not a valid reference.
std::size_t decode_numeric(std::string_view in, std::size_t i, std::string& out) {
    std::size_t j = i + 2;
    int base = 10;
    if (j < in.size() && (in[j] == 'x' || in[j] == 'X')) {
        base = 16;
        ++j;
    }
    const std::size_t digits_start = j;
    std::uint64_t value = 0;
    while (j < in.size() && j - digits_start < 8) {
        const char d = in[j];
        int digit;
        if (d >= '0' && d <= '9') digit = d - '0';
        else if (base == 16 && d >= 'a' && d <= 'f') digit = d - 'a' + 10;
        else if (base == 16 && d >= 'A' && d <= 'F') digit = d - 'A' + 10;
        else break;
        value = value * base + digit;
        ++j;
    }
    if (j == digits_start) return 0;
    if (value == 0 || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) return 0;
    if (j < in.size() && in[j] == ';') ++j;
    append_utf8(out, static_cast<std::uint32_t>(value));
    return j - i;
}

std::string decode_entities(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        if (in[i] != '&' || i + 1 >= in.size()) {
            out.push_back(in[i++]);
            continue;
        }
        if (in[i + 1] == '#') {
            if (auto used = decode_numeric(in, i, out)) {
                i += used;
                continue;
            }
            out.push_back(in[i++]);
            continue;
        }
        std::size_t j = i + 1;
        while (j < in.size() && is_alnum(in[j])) ++j;
        auto replacement = lookup_entity(in.substr(i + 1, j - i - 1));
        if (replacement.empty()) {
            // "&ge5": retry with the leading letters only.
            j = i + 1;
            while (j < in.size() && is_alpha(in[j])) ++j;
            replacement = lookup_entity(in.substr(i + 1, j - i - 1));
        }
        if (j == i + 1 || replacement.empty()) {
            out.push_back(in[i++]);
            continue;
        }
        out.append(replacement);
        i = j < in.size() && in[j] == ';' ? j + 1 : j;
    }
    return out;
}

std::string collapse_whitespace(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    for (char c : in) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

void count_unknown_entities(std::string_view text, CleaningReport& report) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '&') continue;
        std::size_t j = i + 1;
        while (j < text.size() && is_alnum(text[j])) ++j;
        if (j > i + 1 && j < text.size() && text[j] == ';' && is_alpha(text[i + 1])) {
            ++report.unknown_entities[std::string(text.substr(i + 1, j - i - 1))];
        }
    }
}

// ---------------------------------------------------------------------------
// Record parsing helpers

struct RecordError {
    std::string reason;
};

std::string require_id(const nlohmann::json& record, const char* key) {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
        throw RecordError{std::string("missing ") + key};
    }
    return it->get<std::string>();
}

std::string optional_text(const nlohmann::json& record, const char* key) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return {};
    if (!it->is_string()) throw RecordError{std::string(key) + " must be a string"};
    return it->get<std::string>();
}

bool optional_flag(const nlohmann::json& record, const char* key) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return false;
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_number_integer()) return it->get<long long>() != 0;
    throw RecordError{std::string(key) + " must be a boolean"};
}

int parse_score(const nlohmann::json& record) {
    auto it = record.find("score");
    if (it == record.end() || it->is_null()) throw RecordError{"missing score"};
    long long value = 0;
    if (it->is_number_integer()) {
        value = it->get<long long>();
    } else if (it->is_number_float()) {
        const double d = it->get<double>();
        if (!std::isfinite(d) || d != std::floor(d)) throw RecordError{"score must be an integer"};
        value = static_cast<long long>(d);
    } else if (it->is_string()) {
        const auto& s = it->get_ref<const std::string&>();
        std::size_t k = (!s.empty() && s[0] == '-') ? 1 : 0;
        if (k == s.size() || s.size() > 12 ||
            !std::all_of(s.begin() + static_cast<std::ptrdiff_t>(k), s.end(),
                         [](unsigned char c) { return std::isdigit(c); })) {
            throw RecordError{"score must be an integer"};
        }
        value = std::stoll(s);
    } else {
        throw RecordError{"score must be an integer"};
    }
    if (value < kMinScore || value > kMaxScore) throw RecordError{"score out of range"};
    return static_cast<int>(value);
}

struct PendingResponse {
    std::size_t line;
    StudentResponse response;
};

struct PendingAnnotation {
    std::size_t line;
    std::string problem_id; // empty when absent
    TeacherAnnotation annotation;
};

} // namespace

// ---------------------------------------------------------------------------

const Problem* Corpus::find_problem(std::string_view problem_id) const {
    for (const auto& p : problems) {
        if (p.problem_id == problem_id) return &p;
    }
    return nullptr;
}

std::vector<GradedResponse> Corpus::graded() const {
    std::unordered_map<std::string_view, const TeacherAnnotation*> by_response;
    for (const auto& a : annotations) by_response.emplace(a.response_id, &a);
    std::vector<GradedResponse> out;
    out.reserve(annotations.size());
    for (const auto& r : responses) {
        if (auto it = by_response.find(r.response_id); it != by_response.end()) {
            out.push_back({r, *it->second});
        }
    }
    return out;
}

void CleaningReport::merge(const CleaningReport& other) {
    for (const auto& [name, count] : other.unknown_entities) unknown_entities[name] += count;
}

std::span<const std::pair<std::string_view, std::string_view>> entity_table() { return kEntities; }

std::string clean_text(std::string_view raw, CleaningReport& report) {
    std::string current = collapse_whitespace(raw);
    for (;;) {
        auto next = collapse_whitespace(decode_entities(strip_tags(current)));
        if (next == current) break;
        current = std::move(next);
    }
    count_unknown_entities(current, report);
    return current;
}

std::string clean_text(std::string_view raw) {
    CleaningReport ignored;
    return clean_text(raw, ignored);
}

ParseResult parse_corpus(std::string_view jsonl) {
    ParseResult result;
    auto reject = [&](std::size_t line, std::string type, std::string id, std::string reason) {
        result.rejected.push_back({line, std::move(type), std::move(id), std::move(reason)});
    };

    std::vector<std::pair<std::size_t, Problem>> problems;
    std::vector<PendingResponse> responses;
    std::vector<PendingAnnotation> annotations;
    std::set<std::string, std::less<>> problem_ids;
    std::set<std::string, std::less<>> response_ids;

    const auto lines = io::split_lines(jsonl);
    for (std::size_t index = 0; index < lines.size(); ++index) {
        const std::size_t line_no = index + 1;
        const auto& line = lines[index];
        if (std::all_of(line.begin(), line.end(), [](char c) { return is_space(c); })) continue;

        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            reject(line_no, "", "", std::string("malformed record: ") + e.what());
            continue;
        }
        if (!record.is_object()) {
            reject(line_no, "", "", "malformed record: not an object");
            continue;
        }
        const auto type = record.value("record_type", std::string{});
        std::string id;
        try {
            if (type == "problem") {
                id = require_id(record, "problem_id");
                Problem p{id, clean_text(optional_text(record, "body"), result.cleaning),
                          optional_flag(record, "has_image")};
                if (p.body.empty()) throw RecordError{"empty problem body"};
                if (!problem_ids.insert(id).second) throw RecordError{"duplicate problem_id"};
                problems.emplace_back(line_no, std::move(p));
            } else if (type == "response") {
                id = require_id(record, "response_id");
                StudentResponse r{id, require_id(record, "problem_id"),
                                  clean_text(optional_text(record, "answer"), result.cleaning),
                                  optional_flag(record, "has_image")};
                if (!response_ids.insert(id).second) throw RecordError{"duplicate response_id"};
                responses.push_back({line_no, std::move(r)});
            } else if (type == "annotation") {
                id = require_id(record, "response_id");
                TeacherAnnotation a{id, parse_score(record),
                                    clean_text(optional_text(record, "feedback"), result.cleaning),
                                    optional_text(record, "grader_id")};
                annotations.push_back({line_no, optional_text(record, "problem_id"), std::move(a)});
            } else {
                throw RecordError{type.empty() ? "missing record_type" : "unknown record_type " + type};
            }
        } catch (const RecordError& e) {
            reject(line_no, type, id, e.reason);
        } catch (const nlohmann::json::exception& e) {
            reject(line_no, type, id, std::string("malformed record: ") + e.what());
        }
    }

    // Referential integrity, parents first.
    for (auto& [line, p] : problems) result.corpus.problems.push_back(std::move(p));

    std::unordered_map<std::string, std::string> admitted_responses; // response -> problem
    for (auto& pending : responses) {
        if (!problem_ids.contains(pending.response.problem_id)) {
            reject(pending.line, "response", pending.response.response_id,
                   "unknown problem_id " + pending.response.problem_id);
            continue;
        }
        admitted_responses.emplace(pending.response.response_id, pending.response.problem_id);
        result.corpus.responses.push_back(std::move(pending.response));
    }

    std::set<std::string, std::less<>> annotated;
    for (auto& pending : annotations) {
        const auto& rid = pending.annotation.response_id;
        auto it = admitted_responses.find(rid);
        if (it == admitted_responses.end()) {
            reject(pending.line, "annotation", rid, "unknown response_id " + rid);
            continue;
        }
        if (!pending.problem_id.empty() && pending.problem_id != it->second) {
            reject(pending.line, "annotation", rid, "problem_id mismatch");
            continue;
        }
        if (!annotated.insert(rid).second) {
            reject(pending.line, "annotation", rid, "duplicate annotation for response");
            continue;
        }
        result.corpus.annotations.push_back(std::move(pending.annotation));
    }

    std::stable_sort(result.rejected.begin(), result.rejected.end(),
                     [](const Rejection& a, const Rejection& b) { return a.line < b.line; });
    return result;
}

std::string serialize_corpus(const Corpus& corpus) {
    std::unordered_map<std::string_view, std::string_view> problem_of;
    for (const auto& r : corpus.responses) problem_of.emplace(r.response_id, r.problem_id);

    std::string out;
    auto emit = [&out](const ordered_json& j) {
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    };
    for (const auto& p : corpus.problems) {
        emit({{"record_type", "problem"}, {"problem_id", p.problem_id}, {"body", p.body}, {"has_image", p.has_image}});
    }
    for (const auto& r : corpus.responses) {
        emit({{"record_type", "response"},
              {"response_id", r.response_id},
              {"problem_id", r.problem_id},
              {"answer", r.answer},
              {"has_image", r.has_image}});
    }
    for (const auto& a : corpus.annotations) {
        ordered_json j{{"record_type", "annotation"}, {"response_id", a.response_id}};
        if (auto it = problem_of.find(a.response_id); it != problem_of.end()) j["problem_id"] = it->second;
        j["score"] = a.score;
        j["feedback"] = a.feedback;
        j["grader_id"] = a.grader_id;
        emit(j);
    }
    return out;
}

FilterResult filter_corpus(const Corpus& corpus) {
    FilterResult result;
    std::set<std::string, std::less<>> removed_problems;
    for (const auto& p : corpus.problems) {
        if (p.has_image) {
            removed_problems.insert(p.problem_id);
            ++result.image_problems_removed;
        } else {
            result.corpus.problems.push_back(p);
        }
    }
    std::set<std::string, std::less<>> kept_responses;
    for (const auto& r : corpus.responses) {
        if (removed_problems.contains(r.problem_id)) {
            ++result.responses_of_image_problems_removed;
        } else if (r.has_image) {
            ++result.image_responses_removed;
        } else {
            kept_responses.insert(r.response_id);
            result.corpus.responses.push_back(r);
        }
    }
    for (const auto& a : corpus.annotations) {
        if (kept_responses.contains(a.response_id)) {
            result.corpus.annotations.push_back(a);
        } else {
            ++result.annotations_removed;
        }
    }
    return result;
}

std::size_t train_count(std::size_t n, double ratio) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

CorpusSplit split_per_problem(std::span<const GradedResponse> items, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");

    std::map<std::string, std::vector<GradedResponse>> groups;
    for (const auto& item : items) groups[item.response.problem_id].push_back(item);

    std::vector<std::string> too_small;
    for (const auto& [pid, group] : groups) {
        if (group.size() < 2) too_small.push_back(pid);
    }
    if (!too_small.empty()) {
        std::string msg = "problem too small to split:";
        for (const auto& pid : too_small) msg += " " + pid;
        throw DataError(msg);
    }

    CorpusSplit split;
    split.seed = seed;
    split.ratio = ratio;
    for (auto& [pid, group] : groups) {
        std::sort(group.begin(), group.end(), [](const GradedResponse& a, const GradedResponse& b) {
            return a.response.response_id < b.response.response_id;
        });
        auto rng = SeededRng::derive(seed, "split/" + pid);
        rng.shuffle(std::span<GradedResponse>(group));
        const auto k = train_count(group.size(), ratio);
        for (std::size_t i = 0; i < group.size(); ++i) {
            (i < k ? split.train : split.test).push_back(std::move(group[i]));
        }
    }
    return split;
}

std::string split_manifest_json(const CorpusSplit& split) {
    ordered_json j;
    j["seed"] = split.seed;
    j["ratio"] = split.ratio;
    j["train_count"] = split.train.size();
    j["test_count"] = split.test.size();
    auto ids = [](const std::vector<GradedResponse>& part) {
        auto arr = ordered_json::array();
        for (const auto& g : part) arr.push_back(g.response.response_id);
        return arr;
    };
    j["train"] = ids(split.train);
    j["test"] = ids(split.test);
    return j.dump(2) + "\n";
}

Corpus subset_corpus(const Corpus& source, std::span<const GradedResponse> pairs) {
    std::set<std::string, std::less<>> used;
    for (const auto& g : pairs) used.insert(g.response.problem_id);
    Corpus out;
    for (const auto& p : source.problems) {
        if (used.contains(p.problem_id)) out.problems.push_back(p);
    }
    for (const auto& g : pairs) {
        out.responses.push_back(g.response);
        out.annotations.push_back(g.annotation);
    }
    return out;
}

std::array<std::size_t, kScoreClasses> score_distribution(std::span<const TeacherAnnotation> annotations) {
    std::array<std::size_t, kScoreClasses> counts{};
    for (const auto& a : annotations) {
        if (!valid_score(a.score)) throw DataError("annotation " + a.response_id + " has invalid score");
        ++counts[static_cast<std::size_t>(a.score)];
    }
    return counts;
}

} // namespace openresp
