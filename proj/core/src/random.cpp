#include "openresp/random.hpp"

#include <limits>
#include <stdexcept>

#include "openresp/io.hpp"

namespace openresp {

SeededRng::SeededRng(std::uint64_t seed) : engine_(seed) {}

SeededRng SeededRng::derive(std::uint64_t seed, std::string_view label) {
    const auto h = io::fnv1a64(label);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return SeededRng((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

std::uint64_t SeededRng::below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("SeededRng::below needs a positive bound");
    // Rejection sampling keeps the result unbiased and the sequence portable.
    const auto limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t value;
    do {
        value = engine_();
    } while (value >= limit);
    return value % bound;
}

double SeededRng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

} // namespace openresp
