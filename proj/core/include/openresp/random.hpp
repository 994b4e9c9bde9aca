#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace openresp {

/// Seeded generator whose output sequence is fixed by the standard
/// (mt19937_64 plus our own bounded sampling), so shuffles reproduce across
/// standard library implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    /// Independent stream for a named purpose, e.g. derive(seed, "split/" + problem_id).
    static SeededRng derive(std::uint64_t seed, std::string_view label);

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). `bound` must be positive.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform real in [0, 1).
    double unit();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace openresp
