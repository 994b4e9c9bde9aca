#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "fixtures.hpp"
#include "openresp/corpus.hpp"
#include "openresp/io.hpp"

namespace {

int run_cli(const fixtures::TempDir& dir, const std::string& args) {
    const auto cmd = fmt::format("cd '{}' && '{}' {} >out.txt 2>err.txt", dir.path().string(), OPENRESP_CLI, args);
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

void write_raw(const fixtures::TempDir& dir) {
    const auto corpus = fixtures::synthetic_corpus(5, 10, 4);
    openresp::io::write_file_atomic(dir / "raw.jsonl", openresp::serialize_corpus(corpus));
}

} // namespace

TEST_CASE("cli exit codes") {
    fixtures::TempDir dir;
    write_raw(dir);
    CHECK(run_cli(dir, "no-such-verb") == 1);
    CHECK(run_cli(dir, "ingest -i raw.jsonl -o corpus.jsonl --report ingest.json") == 0);
    CHECK(run_cli(dir, "split -i corpus.jsonl --train-out train.jsonl --test-out test.jsonl --manifest split.json") == 0);
    const std::string data = "--set data.train=train.jsonl --set data.test=test.jsonl ";
    CHECK(run_cli(dir, data + "run") == 0);
    CHECK(run_cli(dir, data + "run") == 0);
    CHECK(run_cli(dir, data + "--set completion.endpoint=mock:down --set retry.attempts=1 "
                              "--set data.out_dir=down "
                              "--set 'models=[{\"id\":\"x\",\"kind\":\"llm\"}]' run") == 3);
    CHECK(run_cli(dir, data + "--set retry.attempts=1 --set data.out_dir=partial "
                              "--set 'models=[{\"id\":\"k\",\"kind\":\"knn\"},"
                              "{\"id\":\"x\",\"kind\":\"llm\",\"endpoint\":\"mock:down\"}]' run") == 4);
    CHECK(run_cli(dir, "build-index --train train.jsonl -o index.json") == 0);
    CHECK(run_cli(dir, "score-knn --index index.json --problem p01 --answer 'the slope is half' -o hit.json") == 0);
    const auto hit = nlohmann::json::parse(openresp::io::read_file(dir / "hit.json"));
    CHECK(hit["matched_response_id"].get<std::string>().starts_with("p01-"));
    CHECK(run_cli(dir, "score-knn --index index.json --problem p99 --answer x") == 2);
    CHECK(run_cli(dir, "score-knn --index index.json") == 1);
    CHECK(run_cli(dir, "--set split.ratio=2 show-config") == 1);
    CHECK(run_cli(dir, "show-config --set split.seed=5") == 0);
    CHECK(run_cli(dir, "eval-scoring --predictions corpus.jsonl --test test.jsonl") == 2);

    std::string predictions;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "runs")) {
        const auto name = e.path().filename().string();
        if (name.starts_with("predictions-")) predictions += " '" + e.path().string() + "'";
    }
    CHECK(run_cli(dir, "sample-eval --test test.jsonl --per-problem 2 -o session.json --predictions" + predictions) == 0);
    CHECK(run_cli(dir, "report-feedback --session session.json") == 2);
    CHECK(run_cli(dir, "sample-eval --test test.jsonl --per-problem 5 -o big.json --predictions" + predictions) == 2);
}
