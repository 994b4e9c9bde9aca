#include "openresp/prediction.hpp"

#include <nlohmann/json.hpp>

#include "openresp/errors.hpp"
#include "openresp/io.hpp"

namespace openresp {

std::string_view to_string(FailureKind kind) {
    switch (kind) {
    case FailureKind::none: return "none";
    case FailureKind::parse: return "parse";
    case FailureKind::provider: return "provider";
    case FailureKind::data: return "data";
    }
    return "none";
}

FailureKind failure_kind_from_string(std::string_view text) {
    if (text == "none") return FailureKind::none;
    if (text == "parse") return FailureKind::parse;
    if (text == "provider") return FailureKind::provider;
    if (text == "data") return FailureKind::data;
    throw DataError("unknown failure kind " + std::string(text));
}

std::string serialize_predictions(std::span<const Prediction> predictions) {
    std::string out;
    for (const auto& p : predictions) {
        nlohmann::ordered_json j;
        j["response_id"] = p.response_id;
        j["problem_id"] = p.problem_id;
        j["model_id"] = p.model_id;
        if (p.scored) {
            j["status"] = "ok";
            j["score"] = p.scored->score;
            j["feedback"] = p.scored->feedback;
            j["raw_output"] = p.scored->raw_output;
            j["latency_ms"] = p.scored->latency_ms;
        } else {
            j["status"] = "failed";
            j["failure"] = to_string(p.failure);
            j["error"] = p.error;
        }
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

std::vector<Prediction> parse_predictions(std::string_view jsonl) {
    std::vector<Prediction> out;
    const auto lines = io::split_lines(jsonl);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(lines[i]);
            Prediction p;
            p.response_id = j.at("response_id").get<std::string>();
            p.problem_id = j.value("problem_id", std::string{});
            p.model_id = j.value("model_id", std::string{});
            if (j.at("status").get<std::string>() == "ok") {
                ScoredFeedback s;
                s.model_id = p.model_id;
                s.score = j.at("score").get<int>();
                s.feedback = j.value("feedback", std::string{});
                s.raw_output = j.value("raw_output", std::string{});
                s.latency_ms = j.value("latency_ms", std::int64_t{0});
                p.scored = std::move(s);
            } else {
                p.failure = failure_kind_from_string(j.value("failure", std::string("provider")));
                p.error = j.value("error", std::string{});
            }
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("predictions line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

} // namespace openresp
