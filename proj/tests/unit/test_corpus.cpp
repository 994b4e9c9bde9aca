#include <doctest.h>

#include <random>
#include <set>

#include "fixtures.hpp"
#include "openresp/corpus.hpp"
#include "openresp/errors.hpp"

using namespace openresp;

TEST_CASE("clean_text strips markup and decodes entities") {
    CHECK(clean_text("<p>x &ge; 3</p>") == "x >= 3");
    CHECK(clean_text("a<br>b") == "a b");
    CHECK(clean_text("x<sup>2</sup> + 1") == "x^2 + 1");
    CHECK(clean_text("  lots \t of\n\nspace  ") == "lots of space");
    CHECK(clean_text("5 &times; 3 &divide; 2") == "5 * 3 / 2");
    CHECK(clean_text("&#65;&#x42;") == "AB");
    CHECK(clean_text("x&ge5") == "x>=5");
    CHECK(clean_text("<script>alert(1)</script>ok") == "ok");
    CHECK(clean_text("3 < 4 and 5 > 2") == "3 < 4 and 5 > 2");
    CHECK(clean_text("<notatag>") == "<notatag>");
    CHECK(clean_text("") == "");
}

TEST_CASE("clean_text decodes nested escapes to a fixed point") {
    CHECK(clean_text("&amp;ge;") == ">=");
    CHECK(clean_text("&lt;p&gt;hi&lt;/p&gt;") == "hi");
}

TEST_CASE("clean_text is idempotent on random markup") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> parts{"<p>", "</p>", "&amp;", "&lt;", "&gt;", "&ge;", "&nbsp;", "&bogus;",
                                         "x",   " ",    "<b>",   "</b>", "&#60;", "&",    ";",      "<",
                                         ">",   "amp",  "lt",    "<br/>", "\t",   "<sup>", "#",     "ge"};
    for (int trial = 0; trial < 2000; ++trial) {
        std::string s;
        const auto len = rng() % 12;
        for (std::size_t i = 0; i < len; ++i) s += parts[rng() % parts.size()];
        const auto once = clean_text(s);
        CHECK_MESSAGE(clean_text(once) == once, "input: " << s);
    }
}

TEST_CASE("clean_text reports unknown entities") {
    CleaningReport report;
    CHECK(clean_text("a &foo; b &foo; &bar;", report) == "a &foo; b &foo; &bar;");
    CHECK(report.unknown_entities.at("foo") == 2);
    CHECK(report.unknown_entities.at("bar") == 1);
}

TEST_CASE("parse_corpus admits valid records and rejects bad ones") {
    const std::string jsonl = R"({"record_type":"problem","problem_id":"p1","body":"<p>Find x</p>"}
{"record_type":"problem","problem_id":"p1","body":"dup"}
{"record_type":"problem","problem_id":"p2","body":""}
{"record_type":"response","response_id":"r1","problem_id":"p1","answer":"x = 2"}
{"record_type":"response","response_id":"r2","problem_id":"missing","answer":"?"}
{"record_type":"annotation","response_id":"r1","score":3,"feedback":"Good"}
{"record_type":"annotation","response_id":"r1","score":2}
{"record_type":"annotation","response_id":"r2","score":1}
{"record_type":"response","response_id":"r3","problem_id":"p1","answer":"y"}
{"record_type":"annotation","response_id":"r3","score":7}
not json
{"record_type":"mystery"}

{"record_type":"response","response_id":"r4","problem_id":"p1","answer":"z"}
{"record_type":"annotation","response_id":"r4","score":"4"}
)";
    const auto result = parse_corpus(jsonl);
    REQUIRE(result.corpus.problems.size() == 1);
    CHECK(result.corpus.problems[0].body == "Find x");
    CHECK(result.corpus.responses.size() == 3);
    REQUIRE(result.corpus.annotations.size() == 2);
    CHECK(result.corpus.annotations[0].score == 3);
    CHECK(result.corpus.annotations[1].score == 4);

    std::vector<std::string> reasons;
    for (const auto& r : result.rejected) reasons.push_back(r.reason);
    REQUIRE(result.rejected.size() == 8);
    CHECK(reasons[0] == "duplicate problem_id");
    CHECK(reasons[1] == "empty problem body");
    CHECK(reasons[2] == "unknown problem_id missing");
    CHECK(reasons[3] == "duplicate annotation for response");
    CHECK(reasons[4] == "unknown response_id r2");
    CHECK(reasons[5] == "score out of range");
    CHECK(reasons[6].starts_with("malformed record"));
    CHECK(reasons[7] == "unknown record_type mystery");
    CHECK(result.rejected[0].line == 2);
}

TEST_CASE("score parsing accepts integral forms only") {
    auto one = [](const std::string& score) {
        return parse_corpus(R"({"record_type":"problem","problem_id":"p","body":"b"}
{"record_type":"response","response_id":"r","problem_id":"p","answer":"a"}
{"record_type":"annotation","response_id":"r","score":)" + score + "}\n");
    };
    CHECK(one("2.0").corpus.annotations.at(0).score == 2);
    CHECK(one("\"0\"").corpus.annotations.at(0).score == 0);
    CHECK(one("2.5").rejected.at(0).reason == "score must be an integer");
    CHECK(one("-1").rejected.at(0).reason == "score out of range");
    CHECK(one("\"x\"").rejected.at(0).reason == "score must be an integer");
    CHECK(one("null").rejected.at(0).reason == "missing score");
}

TEST_CASE("serialize_corpus round-trips") {
    const auto corpus = fixtures::synthetic_corpus(4, 6, 3);
    const auto text = serialize_corpus(corpus);
    const auto back = parse_corpus(text);
    CHECK(back.rejected.empty());
    CHECK(back.corpus == corpus);
    CHECK(serialize_corpus(back.corpus) == text);
}

TEST_CASE("filter_corpus drops image items and their annotations") {
    Corpus c;
    c.problems = {{"p1", "b", false}, {"p2", "b", true}};
    c.responses = {{"r1", "p1", "a", false}, {"r2", "p1", "a", true}, {"r3", "p2", "a", false}};
    c.annotations = {{"r1", 1, "", ""}, {"r2", 2, "", ""}, {"r3", 3, "", ""}};
    const auto f = filter_corpus(c);
    CHECK(f.corpus.problems.size() == 1);
    CHECK(f.corpus.responses.size() == 1);
    CHECK(f.corpus.annotations.size() == 1);
    CHECK(f.image_problems_removed == 1);
    CHECK(f.responses_of_image_problems_removed == 1);
    CHECK(f.image_responses_removed == 1);
    CHECK(f.annotations_removed == 2);
}

TEST_CASE("split_per_problem counts and determinism") {
    const auto corpus = fixtures::synthetic_corpus(50, 100, 5);
    const auto graded = corpus.graded();
    const auto a = split_per_problem(graded, 0.8, 42);
    const auto b = split_per_problem(graded, 0.8, 42);
    CHECK(a.train.size() == 4000);
    CHECK(a.test.size() == 1000);
    CHECK(split_manifest_json(a) == split_manifest_json(b));
    const auto c = split_per_problem(graded, 0.8, 43);
    CHECK(split_manifest_json(a) != split_manifest_json(c));

    std::set<std::string> seen;
    for (const auto& g : a.train) seen.insert(g.response.response_id);
    for (const auto& g : a.test) CHECK(seen.insert(g.response.response_id).second);
    CHECK(seen.size() == 5000);
}

TEST_CASE("split membership of a problem ignores other problems") {
    const auto corpus = fixtures::synthetic_corpus(3, 10, 9);
    auto graded = corpus.graded();
    const auto full = split_per_problem(graded, 0.7, 1);
    std::vector<GradedResponse> only_p02;
    for (const auto& g : graded) {
        if (g.response.problem_id == "p02") only_p02.push_back(g);
    }
    std::reverse(only_p02.begin(), only_p02.end());
    const auto alone = split_per_problem(only_p02, 0.7, 1);
    std::vector<std::string> a, b;
    for (const auto& g : full.test) {
        if (g.response.problem_id == "p02") a.push_back(g.response.response_id);
    }
    for (const auto& g : alone.test) b.push_back(g.response.response_id);
    CHECK(a == b);
}

TEST_CASE("split errors") {
    const auto corpus = fixtures::synthetic_corpus(2, 1, 9);
    const auto graded = corpus.graded();
    CHECK_THROWS_AS(split_per_problem(graded, 0.8, 1), DataError);
    const auto ok = fixtures::synthetic_corpus(1, 4, 9).graded();
    CHECK_THROWS_AS(split_per_problem(ok, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(split_per_problem(ok, 0.0, 1), ConfigError);
    CHECK(train_count(5, 0.5) == 3);
    CHECK(train_count(100, 0.8) == 80);
}

TEST_CASE("score_distribution counts per class") {
    const auto c = fixtures::corpus_with_distribution({771, 768, 1086, 816, 1559}, 50);
    const auto d = score_distribution(c.annotations);
    CHECK(d == std::array<std::size_t, 5>{771, 768, 1086, 816, 1559});
}

TEST_CASE("subset_corpus keeps only used problems") {
    const auto corpus = fixtures::synthetic_corpus(3, 4, 2);
    auto graded = corpus.graded();
    graded.resize(4); // p01 only
    const auto sub = subset_corpus(corpus, graded);
    CHECK(sub.problems.size() == 1);
    CHECK(sub.responses.size() == 4);
    CHECK(sub.graded().size() == 4);
}
