#include "openresp/similarity.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "openresp/errors.hpp"

namespace openresp {

namespace {

constexpr std::string_view kIndexFormat = "openresp-similarity-index";
constexpr int kIndexVersion = 1;

} // namespace

double canberra_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("canberra_distance: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double denom = std::abs(x[i]) + std::abs(y[i]);
        if (denom > 0.0) total += std::abs(x[i] - y[i]) / denom;
    }
    return total;
}

SimilarityIndex SimilarityIndex::build(std::span<const GradedResponse> train, EmbeddingProvider& embedder,
                                       std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    SimilarityIndex index;
    index.embedder_id_ = embedder.id();
    index.dim_ = embedder.dim();
    for (std::size_t start = 0; start < train.size(); start += batch_size) {
        const auto chunk = train.subspan(start, std::min(batch_size, train.size() - start));
        std::vector<std::string> texts;
        texts.reserve(chunk.size());
        for (const auto& g : chunk) texts.push_back(g.response.answer);
        auto vectors = embedder.embed_batch(texts);
        if (vectors.size() != chunk.size()) throw DataError("embedder returned the wrong number of vectors");
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            if (vectors[i].dim() != index.dim_) throw DataError("embedder returned a vector of unexpected dimension");
            const auto& g = chunk[i];
            index.pools_[g.response.problem_id].push_back(
                {g.response.response_id, std::move(vectors[i]), g.annotation.score, g.annotation.feedback});
        }
    }
    return index;
}

SimilarityIndex SimilarityIndex::from_entries(std::string embedder_id, std::size_t dim,
                                              std::map<std::string, std::vector<IndexEntry>> pools) {
    SimilarityIndex index;
    index.embedder_id_ = std::move(embedder_id);
    index.dim_ = dim;
    for (auto& [pid, entries] : pools) {
        for (const auto& e : entries) {
            if (e.embedding.dim() != dim) {
                throw DataError("index entry " + e.response_id + " has dim " + std::to_string(e.embedding.dim()) +
                                ", expected " + std::to_string(dim));
            }
            for (double v : e.embedding.values) {
                if (!std::isfinite(v)) throw DataError("index entry " + e.response_id + " has a non-finite value");
            }
            if (!valid_score(e.score)) throw DataError("index entry " + e.response_id + " has an invalid score");
        }
        if (!entries.empty()) index.pools_.emplace(pid, std::move(entries));
    }
    return index;
}

NeighborResult SimilarityIndex::nearest(std::string_view problem_id, const EmbeddingVector& query) const {
    auto it = pools_.find(problem_id);
    if (it == pools_.end() || it->second.empty()) {
        throw DataError("no historical answers for problem " + std::string(problem_id));
    }
    if (query.dim() != dim_) {
        throw std::invalid_argument("query dimension " + std::to_string(query.dim()) + " does not match index dimension " +
                                    std::to_string(dim_));
    }
    const IndexEntry* best = nullptr;
    double best_distance = std::numeric_limits<double>::infinity();
    for (const auto& entry : it->second) {
        const double d = canberra_distance(entry.embedding, query);
        if (best == nullptr || d < best_distance || (d == best_distance && entry.response_id < best->response_id)) {
            best = &entry;
            best_distance = d;
        }
    }
    return {std::string(problem_id), best->response_id, best_distance, best->score, best->feedback};
}

NeighborResult SimilarityIndex::predict(std::string_view problem_id, const std::string& answer,
                                        EmbeddingProvider& embedder) const {
    if (!pools_.contains(problem_id)) throw DataError("no historical answers for problem " + std::string(problem_id));
    return nearest(problem_id, embedder.embed(answer));
}

std::size_t SimilarityIndex::size() const {
    std::size_t n = 0;
    for (const auto& [pid, entries] : pools_) n += entries.size();
    return n;
}

std::string SimilarityIndex::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = kIndexFormat;
    j["version"] = kIndexVersion;
    j["embedder"] = embedder_id_;
    j["dim"] = dim_;
    auto problems = nlohmann::ordered_json::object();
    for (const auto& [pid, entries] : pools_) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries) {
            arr.push_back({{"response_id", e.response_id},
                           {"score", e.score},
                           {"feedback", e.feedback},
                           {"vector", e.embedding.values}});
        }
        problems[pid] = std::move(arr);
    }
    j["problems"] = std::move(problems);
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

SimilarityIndex SimilarityIndex::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != kIndexFormat) throw DataError("not a similarity index file");
        if (j.at("version").get<int>() != kIndexVersion) throw DataError("unsupported similarity index version");
        std::map<std::string, std::vector<IndexEntry>> pools;
        for (const auto& [pid, entries] : j.at("problems").items()) {
            auto& pool = pools[pid];
            for (const auto& e : entries) {
                pool.push_back({e.at("response_id").get<std::string>(),
                                EmbeddingVector{e.at("vector").get<std::vector<double>>()}, e.at("score").get<int>(),
                                e.at("feedback").get<std::string>()});
            }
        }
        return from_entries(j.at("embedder").get<std::string>(), j.at("dim").get<std::size_t>(), std::move(pools));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed similarity index: ") + e.what());
    }
}

} // namespace openresp
