#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "openresp/errors.hpp"
#include "openresp/io.hpp"
#include "openresp/random.hpp"

using namespace openresp;

TEST_CASE("sha256 known vectors") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fnv1a64 known vector") {
    CHECK(io::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("split_lines") {
    CHECK(io::split_lines("a\r\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(io::split_lines("a\n\nb") == std::vector<std::string>{"a", "", "b"});
    CHECK(io::split_lines("").empty());
}

TEST_CASE("write_artifact refuses to clobber different content") {
    fixtures::TempDir dir;
    const auto path = dir / "sub" / "out.txt";
    io::write_artifact(path, "one", false);
    CHECK(io::read_file(path) == "one");
    io::write_artifact(path, "one", false);
    CHECK_THROWS_AS(io::write_artifact(path, "two", false), ConfigError);
    CHECK(io::read_file(path) == "one");
    io::write_artifact(path, "two", true);
    CHECK(io::read_file(path) == "two");
    CHECK(io::sha256_file(path) == io::sha256_hex("two"));
    CHECK_THROWS(io::read_file(dir / "absent"));
}

TEST_CASE("seeded streams are reproducible and independent") {
    auto a = SeededRng::derive(42, "split/p01");
    auto b = SeededRng::derive(42, "split/p01");
    auto c = SeededRng::derive(42, "split/p02");
    std::vector<std::uint64_t> va, vb, vc;
    for (int i = 0; i < 16; ++i) {
        va.push_back(a.next());
        vb.push_back(b.next());
        vc.push_back(c.next());
    }
    CHECK(va == vb);
    CHECK(va != vc);

    SeededRng r(1);
    std::array<int, 6> hist{};
    for (int i = 0; i < 6000; ++i) {
        const auto v = r.below(6);
        REQUIRE(v < 6);
        ++hist[v];
        const double u = r.unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int h : hist) CHECK(h > 800);
    CHECK_THROWS(r.below(0));

    std::vector<int> items{1, 2, 3, 4, 5, 6, 7, 8};
    auto shuffled = items;
    SeededRng(5).shuffle(std::span<int>(shuffled));
    CHECK(std::multiset<int>(shuffled.begin(), shuffled.end()) == std::multiset<int>(items.begin(), items.end()));
    auto again = items;
    SeededRng(5).shuffle(std::span<int>(again));
    CHECK(again == shuffled);
}
