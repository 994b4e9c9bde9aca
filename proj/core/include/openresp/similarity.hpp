#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openresp/corpus.hpp"
#include "openresp/providers.hpp"

namespace openresp {

/// Canberra distance: sum_i |x_i - y_i| / (|x_i| + |y_i|), where terms with a
/// zero denominator contribute 0. Throws std::invalid_argument on a length
/// mismatch.
double canberra_distance(std::span<const double> x, std::span<const double> y);

inline double canberra_distance(const EmbeddingVector& x, const EmbeddingVector& y) {
    return canberra_distance(std::span<const double>(x.values), std::span<const double>(y.values));
}

struct IndexEntry {
    std::string response_id;
    EmbeddingVector embedding;
    int score = 0;
    std::string feedback;

    bool operator==(const IndexEntry&) const = default;
};

struct NeighborResult {
    std::string problem_id;
    std::string matched_response_id;
    double distance = 0.0;
    int predicted_score = 0;
    std::string predicted_feedback;
};

/// Per-problem pools of graded historical answers. Immutable once built;
/// concurrent queries are safe.
class SimilarityIndex {
public:
    SimilarityIndex() = default;

    /// Embeds every training answer (in batches of `batch_size`) and groups
    /// the entries by problem. An empty training set gives an empty index.
    static SimilarityIndex build(std::span<const GradedResponse> train, EmbeddingProvider& embedder,
                                 std::size_t batch_size = 64);

    /// Assembles an index from precomputed entries; validates uniform dim,
    /// finite values and score range (DataError).
    static SimilarityIndex from_entries(std::string embedder_id, std::size_t dim,
                                        std::map<std::string, std::vector<IndexEntry>> pools);

    /// Nearest entry in the problem's own pool by Canberra distance. Ties at
    /// equal distance go to the lexicographically smallest response_id.
    /// Throws DataError "no historical answers for problem <id>" for an
    /// unindexed problem and std::invalid_argument on a dimension mismatch.
    NeighborResult nearest(std::string_view problem_id, const EmbeddingVector& query) const;

    NeighborResult predict(std::string_view problem_id, const std::string& answer,
                           EmbeddingProvider& embedder) const;

    std::size_t dim() const { return dim_; }
    const std::string& embedder_id() const { return embedder_id_; }
    bool empty() const { return pools_.empty(); }
    std::size_t size() const;
    const std::map<std::string, std::vector<IndexEntry>, std::less<>>& pools() const { return pools_; }

    /// JSON document {format, version, embedder, dim, problems: {id: [entries]}}.
    std::string to_json() const;
    static SimilarityIndex from_json(std::string_view text);

private:
    std::string embedder_id_;
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<IndexEntry>, std::less<>> pools_;
};

} // namespace openresp
