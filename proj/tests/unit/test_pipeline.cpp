#include <doctest.h>

#include "fixtures.hpp"
#include "openresp/errors.hpp"
#include "openresp/io.hpp"
#include "openresp/pipeline.hpp"

using namespace openresp;

namespace {

struct Workspace {
    fixtures::TempDir dir;
    std::filesystem::path train, test;

    explicit Workspace(std::size_t problems = 5, std::size_t per_problem = 10) {
        const auto corpus = fixtures::synthetic_corpus(problems, per_problem, 31);
        const auto graded = corpus.graded();
        const auto split = split_per_problem(graded, 0.8, 42);
        train = dir / "train.jsonl";
        test = dir / "test.jsonl";
        io::write_file_atomic(train, serialize_corpus(subset_corpus(corpus, split.train)));
        io::write_file_atomic(test, serialize_corpus(subset_corpus(corpus, split.test)));
    }

    Config config(std::vector<std::string> extra = {}) const {
        extra.push_back("data.train=" + train.string());
        extra.push_back("data.test=" + test.string());
        if (std::none_of(extra.begin(), extra.end(), [](const auto& s) { return s.starts_with("data.out_dir="); })) {
            extra.push_back("data.out_dir=" + (dir / "runs").string());
        }
        return load_config(std::nullopt, [](const std::string&) { return std::nullopt; }, extra);
    }
};

RunOptions quiet(bool force = false) {
    RunOptions o;
    o.force = force;
    o.env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
    o.sleeper = [](std::chrono::milliseconds) {};
    return o;
}

} // namespace

TEST_CASE("ingest cleans and filters raw records") {
    const auto result = ingest(R"({"record_type":"problem","problem_id":"p1","body":"<p>Find &lt;x&gt;</p>"}
{"record_type":"problem","problem_id":"p2","body":"Use the picture <img src=a.png>","has_image":true}
{"record_type":"response","response_id":"r1","problem_id":"p1","answer":"x &ge; 2"}
{"record_type":"response","response_id":"r2","problem_id":"p2","answer":"b"}
{"record_type":"annotation","response_id":"r1","score":3,"feedback":"ok"}
{"record_type":"annotation","response_id":"r2","score":1}
{"record_type":"bogus"}
)");
    REQUIRE(result.corpus.problems.size() == 1);
    CHECK(result.corpus.responses.at(0).answer == "x >= 2");
    CHECK(result.corpus.annotations.size() == 1);
    CHECK(result.rejected.size() == 1);
    const auto report = nlohmann::json::parse(ingest_report_json(result));
    CHECK(report.is_object());
}

TEST_CASE("full run writes one report per model and a manifest") {
    Workspace ws;
    const auto config = ws.config();
    const auto result = run_scoring_eval(config, quiet());
    CHECK(result.exit_code == ExitCode::success);
    REQUIRE(result.models.size() == 3);
    for (const auto& m : result.models) {
        CHECK(m.ok);
        CHECK(std::filesystem::exists(m.report_path));
        CHECK(std::filesystem::exists(m.predictions_path));
        CHECK(m.report->n_items == 10);
    }
    const auto root = result.manifest_path.parent_path();
    CHECK(root.filename() == result.run_id);
    CHECK(std::filesystem::exists(root / "summary.md"));
    const auto manifest = nlohmann::json::parse(io::read_file(result.manifest_path));
    CHECK(manifest["run_id"] == result.run_id);
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest["artifacts"].size() == 7);
    for (const auto& a : manifest["artifacts"]) {
        CHECK(io::sha256_file(root / a["path"].get<std::string>()) == a["sha256"]);
    }
}

TEST_CASE("reports are byte-identical across independent runs") {
    Workspace ws;
    const auto a = run_scoring_eval(ws.config({"data.out_dir=" + (ws.dir / "a").string()}), quiet());
    const auto b = run_scoring_eval(ws.config({"data.out_dir=" + (ws.dir / "b").string()}), quiet());
    CHECK(a.run_id == b.run_id);
    for (std::size_t k = 0; k < a.models.size(); ++k) {
        CHECK(io::read_file(a.models[k].report_path) == io::read_file(b.models[k].report_path));
        CHECK(io::read_file(a.models[k].predictions_path) == io::read_file(b.models[k].predictions_path));
    }
    const auto other = run_scoring_eval(ws.config({"split.seed=43", "data.out_dir=" + (ws.dir / "c").string()}), quiet());
    CHECK(other.run_id != a.run_id);
}

TEST_CASE("an unavailable model yields a partial run") {
    Workspace ws;
    const auto config = ws.config({"retry.attempts=2",
                                   R"(models=[{"id":"sbert-canberra","kind":"knn"},)"
                                   R"({"id":"goat-finetuned","kind":"llm","mode":"finetuned_endpoint"},)"
                                   R"({"id":"gpt4-zero-shot","kind":"llm","mode":"zero_shot","endpoint":"mock:down"}])"});
    const auto result = run_scoring_eval(config, quiet());
    CHECK(result.exit_code == ExitCode::partial);
    std::size_t reports = 0;
    for (const auto& m : result.models) {
        if (m.ok) ++reports;
        else CHECK(m.model_id == "gpt4-zero-shot");
    }
    CHECK(reports == 2);
    const auto manifest = nlohmann::json::parse(io::read_file(result.manifest_path));
    CHECK(manifest["exit_code"] == static_cast<int>(ExitCode::partial));
    CHECK(manifest["models"][2]["status"] == "failed");
    CHECK(!manifest["models"][2]["error"].get<std::string>().empty());

    const auto all_down = run_scoring_eval(
        ws.config({"completion.endpoint=mock:down", "retry.attempts=1",
                   R"(models=[{"id":"gpt4-zero-shot","kind":"llm","mode":"zero_shot"}])",
                   "data.out_dir=" + (ws.dir / "down").string()}),
        quiet());
    CHECK(all_down.exit_code == ExitCode::provider_error);
}

TEST_CASE("missing inputs are data errors") {
    Workspace ws;
    auto config = ws.config();
    config.data.test.clear();
    CHECK_THROWS_AS(run_scoring_eval(config, quiet()), DataError);
    config = ws.config();
    config.data.train = (ws.dir / "absent.jsonl").string();
    CHECK_THROWS_AS(run_scoring_eval(config, quiet()), DataError);
}

TEST_CASE("rerunning keeps the manifest and force is needed for changed artifacts") {
    Workspace ws;
    const auto config = ws.config();
    int tick = 0;
    auto opts = quiet();
    opts.clock = [&] { return "2026-01-0" + std::to_string(++tick) + "T00:00:00Z"; };
    const auto first = run_scoring_eval(config, opts);
    const auto before = io::read_file(first.manifest_path);
    const auto second = run_scoring_eval(config, opts);
    CHECK(io::read_file(second.manifest_path) == before);

    io::write_file_atomic(first.models[0].report_path, "tampered");
    CHECK_THROWS_AS(run_scoring_eval(config, opts), ConfigError);
    opts.force = true;
    const auto forced = run_scoring_eval(config, opts);
    CHECK(io::read_file(forced.models[0].report_path) != "tampered");
}
