#include "openresp/feedback_eval.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <unordered_map>

#include "openresp/errors.hpp"
#include "openresp/random.hpp"

namespace openresp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string slot_name(std::size_t k) {
    std::string name;
    do {
        name.insert(name.begin(), static_cast<char>('A' + k % 26));
        k /= 26;
    } while (k-- > 0);
    return name;
}

std::size_t digits(std::size_t n) {
    std::size_t d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

ordered_json item_to_json(const EvalItem& item) {
    ordered_json candidates = ordered_json::array();
    for (const auto& c : item.candidates) {
        candidates.push_back({{"slot_id", c.slot_id}, {"model_id", c.model_id}, {"feedback", c.feedback}});
    }
    return {{"item_id", item.item_id},       {"problem_id", item.problem_id},
            {"response_id", item.response_id}, {"problem", item.problem_body},
            {"answer", item.answer},           {"teacher_score", item.teacher_score},
            {"candidates", std::move(candidates)}};
}

EvalItem item_from_json(const nlohmann::json& j) {
    EvalItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.problem_id = j.at("problem_id").get<std::string>();
    item.response_id = j.at("response_id").get<std::string>();
    item.problem_body = j.at("problem").get<std::string>();
    item.answer = j.at("answer").get<std::string>();
    item.teacher_score = j.at("teacher_score").get<int>();
    for (const auto& c : j.at("candidates")) {
        item.candidates.push_back(
            {c.at("slot_id").get<std::string>(), c.at("model_id").get<std::string>(), c.at("feedback").get<std::string>()});
    }
    return item;
}

ordered_json judgment_json(const RaterJudgment& j) {
    ordered_json ratings = ordered_json::object();
    for (const auto& [slot, r] : j.ratings) {
        ratings[slot] = {{"accuracy", r.accuracy}, {"relevancy", r.relevancy}, {"motivation", r.motivation}};
    }
    return {{"rater_id", j.rater_id},
            {"item_id", j.item_id},
            {"ratings", std::move(ratings)},
            {"preferred", std::vector<std::string>(j.preferred_slots.begin(), j.preferred_slots.end())}};
}

RaterJudgment judgment_from(const nlohmann::json& j) {
    RaterJudgment out;
    out.rater_id = j.at("rater_id").get<std::string>();
    out.item_id = j.at("item_id").get<std::string>();
    for (const auto& [slot, r] : j.at("ratings").items()) {
        out.ratings[slot] = {r.at("accuracy").get<int>(), r.at("relevancy").get<int>(), r.at("motivation").get<int>()};
    }
    for (const auto& s : j.at("preferred")) out.preferred_slots.insert(s.get<std::string>());
    return out;
}

} // namespace

std::string judgment_to_json(const RaterJudgment& judgment) {
    return judgment_json(judgment).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

RaterJudgment parse_judgment(std::string_view text) {
    try {
        return judgment_from(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed judgment: ") + e.what());
    }
}

const Candidate* EvalItem::find_slot(std::string_view slot_id) const {
    for (const auto& c : candidates) {
        if (c.slot_id == slot_id) return &c;
    }
    return nullptr;
}

std::vector<EvalItem> sample_eval_set(const Corpus& corpus, std::span<const GradedResponse> test,
                                      std::size_t per_problem, std::uint64_t seed) {
    if (per_problem == 0) throw ConfigError("per_problem must be positive");
    std::map<std::string, std::vector<const GradedResponse*>> groups;
    for (const auto& g : test) groups[g.response.problem_id].push_back(&g);

    std::vector<std::string> undersized;
    for (const auto& [pid, pool] : groups) {
        if (pool.size() < per_problem) undersized.push_back(fmt::format("{} ({} < {})", pid, pool.size(), per_problem));
    }
    if (!undersized.empty()) {
        throw DataError(fmt::format("test pool too small for {} items per problem: {}", per_problem,
                                    fmt::join(undersized, ", ")));
    }

    std::vector<EvalItem> items;
    const std::size_t width = std::max<std::size_t>(3, digits(groups.size() * per_problem));
    for (auto& [pid, pool] : groups) {
        const auto* problem = corpus.find_problem(pid);
        if (!problem) throw DataError("test response references unknown problem " + pid);
        std::sort(pool.begin(), pool.end(), [](const GradedResponse* a, const GradedResponse* b) {
            return a->response.response_id < b->response.response_id;
        });
        auto rng = SeededRng::derive(seed, "eval/" + pid);
        rng.shuffle(std::span<const GradedResponse*>(pool));
        for (std::size_t k = 0; k < per_problem; ++k) {
            const auto& g = *pool[k];
            EvalItem item;
            item.item_id = fmt::format("item-{:0{}}", items.size() + 1, width);
            item.problem_id = pid;
            item.response_id = g.response.response_id;
            item.problem_body = problem->body;
            item.answer = g.response.answer;
            item.teacher_score = g.annotation.score;
            items.push_back(std::move(item));
        }
    }
    return items;
}

void attach_candidates(std::vector<EvalItem>& items,
                       const std::map<std::string, std::vector<Prediction>>& predictions_by_model, std::uint64_t seed) {
    std::map<std::string, std::unordered_map<std::string, const Prediction*>> lookup;
    for (const auto& [model, predictions] : predictions_by_model) {
        auto& table = lookup[model];
        for (const auto& p : predictions) table.emplace(p.response_id, &p);
    }
    std::vector<std::string> missing;
    for (auto& item : items) {
        std::vector<Candidate> candidates;
        for (const auto& [model, table] : lookup) {
            auto it = table.find(item.response_id);
            if (it == table.end() || !it->second->ok()) {
                missing.push_back(model + "/" + item.response_id);
                continue;
            }
            candidates.push_back({{}, model, it->second->scored->feedback});
        }
        auto rng = SeededRng::derive(seed, "slots/" + item.item_id);
        rng.shuffle(std::span<Candidate>(candidates));
        for (std::size_t k = 0; k < candidates.size(); ++k) candidates[k].slot_id = slot_name(k);
        item.candidates = std::move(candidates);
    }
    if (!missing.empty()) {
        throw DataError(fmt::format("no usable prediction for: {}", fmt::join(missing, ", ")));
    }
}

int consensus_binary(std::span<const int> ratings) {
    if (ratings.empty()) throw DataError("consensus requires at least one rater judgment");
    return std::all_of(ratings.begin(), ratings.end(), [](int r) { return r == 1; }) ? 1 : 0;
}

MotivationFlags motivation_flags(std::span<const int> ratings) {
    if (ratings.empty()) throw DataError("motivation flags require at least one rater judgment");
    MotivationFlags flags;
    for (int r : ratings) {
        if (r == 1) flags.motivating = 1;
        if (r == -1) flags.demotivating = 1;
    }
    return flags;
}

// ---------------------------------------------------------------------------

RatingSession RatingSession::create(std::string session_id, std::vector<EvalItem> items,
                                    std::vector<std::string> model_ids, std::vector<std::string> rater_ids,
                                    std::uint64_t seed, std::size_t per_problem) {
    Data data;
    data.session_id = std::move(session_id);
    data.seed = seed;
    data.per_problem = per_problem;
    data.model_ids = std::move(model_ids);
    data.rater_ids = std::move(rater_ids);
    data.items = std::move(items);
    for (const auto& rater : data.rater_ids) {
        std::vector<std::string> order;
        order.reserve(data.items.size());
        for (const auto& item : data.items) order.push_back(item.item_id);
        auto rng = SeededRng::derive(seed, "order/" + rater);
        rng.shuffle(std::span<std::string>(order));
        data.presentation_order[rater] = std::move(order);
    }
    return RatingSession(std::move(data));
}

RatingSession::RatingSession(Data data) : data_(std::move(data)) {
    if (data_.session_id.empty()) throw DataError("session id must not be empty");
    if (data_.rater_ids.empty()) throw DataError("a session needs at least one rater");
    std::set<std::string> raters(data_.rater_ids.begin(), data_.rater_ids.end());
    if (raters.size() != data_.rater_ids.size() || raters.contains("")) throw DataError("rater ids must be unique and non-empty");
    std::set<std::string> models(data_.model_ids.begin(), data_.model_ids.end());
    if (models.size() != data_.model_ids.size()) throw DataError("model ids must be unique");

    std::set<std::string> item_ids;
    for (const auto& item : data_.items) {
        if (!item_ids.insert(item.item_id).second) throw DataError("duplicate item id " + item.item_id);
        std::set<std::string> slots, item_models;
        for (const auto& c : item.candidates) {
            if (!slots.insert(c.slot_id).second) throw DataError("duplicate slot in item " + item.item_id);
            item_models.insert(c.model_id);
        }
        if (item_models != models || item.candidates.size() != models.size()) {
            throw DataError("item " + item.item_id + " must carry exactly one candidate per model");
        }
    }
    for (const auto& rater : data_.rater_ids) {
        auto it = data_.presentation_order.find(rater);
        if (it == data_.presentation_order.end()) throw DataError("no presentation order for rater " + rater);
        std::set<std::string> order(it->second.begin(), it->second.end());
        if (order != item_ids || it->second.size() != item_ids.size()) {
            throw DataError("presentation order for " + rater + " is not a permutation of the items");
        }
    }
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& j : data_.judgments) {
        try {
            check_judgment(j);
        } catch (const ValidationError& e) {
            throw DataError(e.what());
        }
        if (!seen.emplace(j.rater_id, j.item_id).second) {
            throw DataError("duplicate judgment by " + j.rater_id + " for " + j.item_id);
        }
    }
}

RatingSession::RatingSession(const RatingSession& other) : data_(other.snapshot()) {}

void RatingSession::check_judgment(const RaterJudgment& j) const {
    if (std::find(data_.rater_ids.begin(), data_.rater_ids.end(), j.rater_id) == data_.rater_ids.end()) {
        throw ValidationError("unknown rater " + j.rater_id);
    }
    const EvalItem* item = nullptr;
    for (const auto& candidate : data_.items) {
        if (candidate.item_id == j.item_id) item = &candidate;
    }
    if (!item) throw ValidationError("unknown item " + j.item_id);
    for (const auto& [slot, rating] : j.ratings) {
        if (!item->find_slot(slot)) throw ValidationError("unknown slot " + slot + " in item " + j.item_id);
        if (rating.accuracy != 0 && rating.accuracy != 1) throw ValidationError("accuracy must be 0 or 1");
        if (rating.relevancy != 0 && rating.relevancy != 1) throw ValidationError("relevancy must be 0 or 1");
        if (rating.motivation < -1 || rating.motivation > 1) throw ValidationError("motivation must be -1, 0 or 1");
    }
    for (const auto& c : item->candidates) {
        if (!j.ratings.contains(c.slot_id)) throw ValidationError("slot " + c.slot_id + " is not rated");
    }
    if (j.preferred_slots.empty()) throw ValidationError("at least one preferred slot is required");
    for (const auto& slot : j.preferred_slots) {
        if (!item->find_slot(slot)) throw ValidationError("preferred slot " + slot + " is not in item " + j.item_id);
    }
}

std::optional<EvalItem> RatingSession::next_item(std::string_view rater_id) const {
    std::lock_guard lock(mutex_);
    auto it = data_.presentation_order.find(std::string(rater_id));
    if (it == data_.presentation_order.end()) throw ValidationError("unknown rater " + std::string(rater_id));
    for (const auto& item_id : it->second) {
        const bool judged = std::any_of(data_.judgments.begin(), data_.judgments.end(), [&](const RaterJudgment& j) {
            return j.rater_id == rater_id && j.item_id == item_id;
        });
        if (judged) continue;
        for (const auto& item : data_.items) {
            if (item.item_id == item_id) return item;
        }
    }
    return std::nullopt;
}

RecordOutcome RatingSession::record(const RaterJudgment& judgment) {
    std::lock_guard lock(mutex_);
    check_judgment(judgment);
    for (const auto& existing : data_.judgments) {
        if (existing.rater_id == judgment.rater_id && existing.item_id == judgment.item_id) {
            if (existing == judgment) return RecordOutcome::duplicate;
            throw ConflictError(judgment.rater_id + " already judged " + judgment.item_id + " differently");
        }
    }
    data_.judgments.push_back(judgment);
    return RecordOutcome::stored;
}

Progress RatingSession::progress(std::string_view rater_id) const {
    std::lock_guard lock(mutex_);
    if (!data_.presentation_order.contains(std::string(rater_id))) {
        throw ValidationError("unknown rater " + std::string(rater_id));
    }
    Progress p{0, data_.items.size()};
    for (const auto& j : data_.judgments) p.done += j.rater_id == rater_id ? 1 : 0;
    return p;
}

std::vector<std::pair<std::string, std::string>> RatingSession::missing() const {
    std::lock_guard lock(mutex_);
    std::set<std::pair<std::string, std::string>> judged;
    for (const auto& j : data_.judgments) judged.emplace(j.rater_id, j.item_id);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& rater : data_.rater_ids) {
        for (const auto& item : data_.items) {
            if (!judged.contains({rater, item.item_id})) out.emplace_back(rater, item.item_id);
        }
    }
    return out;
}

bool RatingSession::complete() const { return missing().empty(); }

RatingSession::Data RatingSession::snapshot() const {
    std::lock_guard lock(mutex_);
    return data_;
}

std::string RatingSession::to_json() const {
    const auto data = snapshot();
    ordered_json j;
    j["session_id"] = data.session_id;
    j["seed"] = data.seed;
    j["per_problem"] = data.per_problem;
    j["model_ids"] = data.model_ids;
    j["rater_ids"] = data.rater_ids;
    auto items = ordered_json::array();
    for (const auto& item : data.items) items.push_back(item_to_json(item));
    j["items"] = std::move(items);
    auto orders = ordered_json::object();
    for (const auto& [rater, order] : data.presentation_order) orders[rater] = order;
    j["presentation_order"] = std::move(orders);
    auto judgments = ordered_json::array();
    for (const auto& judgment : data.judgments) judgments.push_back(judgment_json(judgment));
    j["judgments"] = std::move(judgments);
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

RatingSession RatingSession::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Data data;
        data.session_id = j.at("session_id").get<std::string>();
        data.seed = j.at("seed").get<std::uint64_t>();
        data.per_problem = j.value("per_problem", std::size_t{0});
        data.model_ids = j.at("model_ids").get<std::vector<std::string>>();
        data.rater_ids = j.at("rater_ids").get<std::vector<std::string>>();
        for (const auto& item : j.at("items")) data.items.push_back(item_from_json(item));
        for (const auto& [rater, order] : j.at("presentation_order").items()) {
            data.presentation_order[rater] = order.get<std::vector<std::string>>();
        }
        for (const auto& judgment : j.value("judgments", nlohmann::json::array())) {
            data.judgments.push_back(judgment_from(judgment));
        }
        return RatingSession(std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed session file: ") + e.what());
    }
}

std::string rater_view_json(const EvalItem& item, Progress progress) {
    auto slots = ordered_json::array();
    for (const auto& c : item.candidates) slots.push_back({{"slot_id", c.slot_id}, {"feedback", c.feedback}});
    ordered_json j{{"item_id", item.item_id},
                   {"problem", item.problem_body},
                   {"answer", item.answer},
                   {"teacher_score", item.teacher_score},
                   {"slots", std::move(slots)},
                   {"progress", {{"done", progress.done}, {"total", progress.total}}}};
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

bool mentions_any(std::string_view payload, std::span<const std::string> model_ids) {
    return std::any_of(model_ids.begin(), model_ids.end(), [&](const std::string& id) {
        return !id.empty() && payload.find(id) != std::string_view::npos;
    });
}

// ---------------------------------------------------------------------------

PreferenceTally preference_tally_from_counts(const std::map<std::string, std::map<std::string, std::size_t>>& counts,
                                             std::size_t n_items) {
    if (n_items == 0) throw DataError("preference tally over zero items");
    if (counts.empty()) throw DataError("preference tally needs at least one rater");
    PreferenceTally tally;
    tally.counts = counts;
    tally.n_items = n_items;
    for (const auto& [rater, per_model] : counts) {
        for (const auto& [model, points] : per_model) {
            tally.averaged_percent[model] +=
                static_cast<double>(points) / static_cast<double>(n_items) * 100.0 / static_cast<double>(counts.size());
        }
    }
    return tally;
}

PreferenceTally preference_tally(const RatingSession::Data& session) {
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const auto& rater : session.rater_ids) {
        for (const auto& model : session.model_ids) counts[rater][model] = 0;
    }
    std::unordered_map<std::string, const EvalItem*> items;
    for (const auto& item : session.items) items.emplace(item.item_id, &item);
    for (const auto& j : session.judgments) {
        const auto it = items.find(j.item_id);
        if (it == items.end()) throw DataError("judgment for unknown item " + j.item_id);
        for (const auto& slot : j.preferred_slots) {
            const auto* candidate = it->second->find_slot(slot);
            if (!candidate) throw DataError("preferred slot " + slot + " is not in item " + j.item_id);
            ++counts[j.rater_id][candidate->model_id];
        }
    }
    return preference_tally_from_counts(counts, session.items.size());
}

ConsensusReport build_consensus_report(const RatingSession::Data& session) {
    std::map<std::pair<std::string, std::string>, const RaterJudgment*> by_key;
    for (const auto& j : session.judgments) by_key[{j.rater_id, j.item_id}] = &j;

    std::vector<std::string> missing;
    for (const auto& rater : session.rater_ids) {
        for (const auto& item : session.items) {
            if (!by_key.contains({rater, item.item_id})) missing.push_back(fmt::format("({}, {})", rater, item.item_id));
        }
    }
    if (!missing.empty()) {
        throw DataError(fmt::format("session {} is incomplete; missing judgments: {}", session.session_id,
                                    fmt::join(missing, ", ")));
    }

    ConsensusReport report;
    report.model_ids = session.model_ids;
    report.rater_ids = session.rater_ids;
    report.n_items = session.items.size();
    for (const auto& model : session.model_ids) {
        auto& mc = report.models[model];
        for (const auto& rater : session.rater_ids) mc.per_rater[rater] = {};
    }

    std::vector<int> accuracy, relevancy, motivation;
    for (const auto& item : session.items) {
        for (const auto& candidate : item.candidates) {
            auto& mc = report.models[candidate.model_id];
            accuracy.clear();
            relevancy.clear();
            motivation.clear();
            for (const auto& rater : session.rater_ids) {
                const auto* judgment = by_key.at({rater, item.item_id});
                const auto& rating = judgment->ratings.at(candidate.slot_id);
                accuracy.push_back(rating.accuracy);
                relevancy.push_back(rating.relevancy);
                motivation.push_back(rating.motivation);
                auto& rc = mc.per_rater[rater];
                rc.accurate += rating.accuracy == 1;
                rc.relevant += rating.relevancy == 1;
                rc.motivating += rating.motivation == 1;
                rc.demotivating += rating.motivation == -1;
                rc.preferred += judgment->preferred_slots.contains(candidate.slot_id);
            }
            mc.accuracy_consensus += consensus_binary(accuracy);
            mc.relevancy_consensus += consensus_binary(relevancy);
            const auto flags = motivation_flags(motivation);
            mc.motivating += flags.motivating;
            mc.demotivating += flags.demotivating;
        }
    }
    report.preference = preference_tally(session);
    for (auto& [model, mc] : report.models) mc.preference_percent = report.preference.averaged_percent[model];
    return report;
}

std::string consensus_report_to_json(const ConsensusReport& report) {
    ordered_json j;
    j["n_items"] = report.n_items;
    j["rater_ids"] = report.rater_ids;
    j["model_ids"] = report.model_ids;
    auto models = ordered_json::object();
    for (const auto& model : report.model_ids) {
        const auto& mc = report.models.at(model);
        auto raters = ordered_json::object();
        for (const auto& [rater, rc] : mc.per_rater) {
            raters[rater] = {{"accurate", rc.accurate},
                             {"relevant", rc.relevant},
                             {"motivating", rc.motivating},
                             {"demotivating", rc.demotivating},
                             {"preferred", rc.preferred}};
        }
        models[model] = {{"accuracy_consensus", mc.accuracy_consensus},
                         {"relevancy_consensus", mc.relevancy_consensus},
                         {"motivating", mc.motivating},
                         {"demotivating", mc.demotivating},
                         {"preference_percent", mc.preference_percent},
                         {"per_rater", std::move(raters)}};
    }
    j["models"] = std::move(models);
    return j.dump(2) + "\n";
}

std::string render_consensus_tables(const ConsensusReport& report) {
    std::size_t width = std::string_view("Avg. Percent").size();
    for (const auto& r : report.rater_ids) width = std::max(width, r.size());
    std::vector<std::size_t> widths;
    for (const auto& m : report.model_ids) widths.push_back(std::max<std::size_t>(m.size(), 6));

    auto header = [&](std::string_view title) {
        std::string out = fmt::format("{}\n{:<{}}", title, "Evaluator", width);
        for (std::size_t k = 0; k < report.model_ids.size(); ++k) out += fmt::format("  {:>{}}", report.model_ids[k], widths[k]);
        return out + "\n";
    };
    auto row = [&](std::string_view label, auto&& value_of) {
        std::string out = fmt::format("{:<{}}", label, width);
        for (std::size_t k = 0; k < report.model_ids.size(); ++k) {
            out += fmt::format("  {:>{}}", value_of(report.models.at(report.model_ids[k])), widths[k]);
        }
        return out + "\n";
    };
    auto table = [&](std::string_view title, auto per_rater, auto combined, std::string_view combined_label) {
        std::string out = header(title);
        for (const auto& rater : report.rater_ids) {
            out += row(rater, [&](const ModelConsensus& mc) { return fmt::format("{}", per_rater(mc.per_rater.at(rater))); });
        }
        out += row(combined_label, [&](const ModelConsensus& mc) { return combined(mc); });
        return out;
    };

    std::string out;
    out += table("Accuracy", [](const RaterCounts& c) { return c.accurate; },
                 [](const ModelConsensus& mc) { return fmt::format("{}", mc.accuracy_consensus); }, "Consensus");
    out += "\n";
    out += table("Relevancy", [](const RaterCounts& c) { return c.relevant; },
                 [](const ModelConsensus& mc) { return fmt::format("{}", mc.relevancy_consensus); }, "Consensus");
    out += "\n";
    out += table("Motivation", [](const RaterCounts& c) { return c.motivating; },
                 [](const ModelConsensus& mc) { return fmt::format("{}", mc.motivating); }, "Consensus");
    out += "\n";
    out += table("Demotivation", [](const RaterCounts& c) { return c.demotivating; },
                 [](const ModelConsensus& mc) { return fmt::format("{}", mc.demotivating); }, "Consensus");
    out += "\n";
    out += table("Preferred Model", [](const RaterCounts& c) { return c.preferred; },
                 [](const ModelConsensus& mc) { return fmt::format("{:g}%", mc.preference_percent); }, "Avg. Percent");
    return out;
}

} // namespace openresp
