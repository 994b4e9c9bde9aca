#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "openresp/config.hpp"
#include "openresp/errors.hpp"

using namespace openresp;

namespace {

EnvLookup env_of(std::map<std::string, std::string> values) {
    return [values = std::move(values)](const std::string& name) -> std::optional<std::string> {
        const auto it = values.find(name);
        if (it == values.end()) return std::nullopt;
        return it->second;
    };
}

void write(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

} // namespace

TEST_CASE("defaults") {
    const auto c = load_config(std::nullopt, env_of({}), {});
    CHECK(c.split.ratio == 0.8);
    CHECK(c.split.seed == 42);
    CHECK(c.eval.per_problem == 2);
    CHECK(c.eval.raters == std::vector<std::string>{"rater-1", "rater-2"});
    CHECK(c.data.out_dir == "runs");
    REQUIRE(c.models.size() == 3);
    CHECK(c.models[0].id == "sbert-canberra");
    CHECK(c.models[0].kind == ModelKind::knn);
    CHECK(c.models[1].mode == LlmMode::finetuned_endpoint);
    CHECK(c.models[2].mode == LlmMode::zero_shot);
    CHECK(nlohmann::json::parse(default_config_json()).contains("retry"));
}

TEST_CASE("file, environment and overrides layer in order") {
    fixtures::TempDir dir;
    write(dir / "c.json", R"({"split":{"ratio":0.7,"seed":1},"eval":{"per_problem":3},"data":{"train":"from-file"}})");
    const auto file_only = load_config(dir / "c.json", env_of({}), {});
    CHECK(file_only.split.ratio == 0.7);
    CHECK(file_only.split.seed == 1);
    CHECK(file_only.eval.per_problem == 3);

    const auto with_env = load_config(dir / "c.json", env_of({{"OPENRESP_SPLIT_SEED", "9"}, {"OPENRESP_DATA_TRAIN", "env.jsonl"}}), {});
    CHECK(with_env.split.seed == 9);
    CHECK(with_env.split.ratio == 0.7);
    CHECK(with_env.data.train == "env.jsonl");

    const auto all = load_config(dir / "c.json", env_of({{"OPENRESP_SPLIT_SEED", "9"}}),
                                 {"split.seed=11", "eval.raters=[\"a\",\"b\",\"c\"]", "data.train=123"});
    CHECK(all.split.seed == 11);
    CHECK(all.eval.raters.size() == 3);
    CHECK(all.data.train == "123");
}

TEST_CASE("invalid configuration is rejected") {
    fixtures::TempDir dir;
    write(dir / "unknown.json", R"({"split":{"ratoi":0.7}})");
    CHECK_THROWS_WITH_AS(load_config(dir / "unknown.json", env_of({}), {}), doctest::Contains("split.ratoi"), ConfigError);
    write(dir / "bad.json", "{not json");
    CHECK_THROWS_AS(load_config(dir / "bad.json", env_of({}), {}), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json", env_of({}), {}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"nope.key=1"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"split.ratio=1.5"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"split.seed=\"x\""}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"novalue"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"split=1"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({{"OPENRESP_SPLIT_RATIO", "abc"}}), {}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {R"(models=[{"id":"a","kind":"knn"},{"id":"a","kind":"knn"}])"}),
                    ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, env_of({}), {"completion.endpoint=ftp://x"}), ConfigError);
}

TEST_CASE("snapshot redacts serve tokens") {
    const auto c = load_config(std::nullopt, env_of({{"OPENRESP_SERVE_ADMIN_TOKEN", "s3cret"}}), {"serve.rater_token=hunter2"});
    CHECK(c.serve.admin_token == "s3cret");
    CHECK(c.serve.rater_token == "hunter2");
    CHECK(c.snapshot.find("s3cret") == std::string::npos);
    CHECK(c.snapshot.find("hunter2") == std::string::npos);
    CHECK(c.snapshot.find("<redacted>") != std::string::npos);
    CHECK(load_config(std::nullopt, env_of({}), {}).snapshot == load_config(std::nullopt, env_of({}), {}).snapshot);
}

TEST_CASE("provider factories honour mock endpoints") {
    const auto c = load_config(std::nullopt, env_of({}), {"completion.endpoint=mock:down", "retry.attempts=2"});
    const auto embedder = make_embedding_provider(c, env_of({}));
    CHECK(embedder->embed("x").dim() == c.embedding.dim);
    int sleeps = 0;
    const auto down = make_completion_provider(c, c.models[1], env_of({}), [&](std::chrono::milliseconds) { ++sleeps; });
    try {
        down->complete("x", {});
        FAIL("expected failure");
    } catch (const ProviderError& e) {
        CHECK(e.kind() == ProviderError::Kind::exhausted);
    }
    CHECK(sleeps == 1);

    const auto ok = load_config(std::nullopt, env_of({}), {});
    const auto mock = make_completion_provider(ok, ok.models[2], env_of({}));
    CHECK(mock->complete("#score=2", {}).text.starts_with("Score: 2"));
}
