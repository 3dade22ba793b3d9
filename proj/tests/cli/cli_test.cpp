#include "cli_support.hpp"

#include "comicreid/codec.hpp"

#include "../unit/test_support.hpp"

#include <doctest.h>

using namespace clitest;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

// synth -> split with a pool threshold sized to the corpus
void prepare(const TempDir& d)
{
    REQUIRE(run({"synth", "--identities", "20", "--seed", "7", "--out", (d / "syn").string()}).code == 0);
    const auto n = comicreid::read_sequences(d / "syn" / "sequences.jsonl").size();
    REQUIRE(run({"split", "--sequences", (d / "syn" / "sequences.jsonl").string(), "--threshold",
                 std::to_string(n * 6 / 10), "--seed", "7", "--out", (d / "split").string()})
                .code == 0);
}

Outcome finetune(const TempDir& d, const std::string& out, std::vector<std::string> extra = {})
{
    std::vector<std::string> args{"finetune",   "--train", (d / "split" / "train.jsonl").string(),
                                  "--val",      (d / "split" / "val.jsonl").string(),
                                  "--features", (d / "syn" / "features.jsonl").string(),
                                  "--seed",     "7",
                                  "--out",      (d / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
}

Outcome evaluate(const TempDir& d, const std::string& scope, const std::string& out)
{
    return run({"evaluate", "--sequences", (d / "split" / "test.jsonl").string(), "--features",
                (d / "syn" / "features.jsonl").string(), "--projector", (d / "ft" / "projector.json").string(),
                "--scope", scope, "--out", (d / out).string()});
}

} // namespace

TEST_CASE("synth, finetune and evaluate end to end")
{
    TempDir d("cli_e2e");
    prepare(d);
    REQUIRE(finetune(d, "ft").code == 0);
    const auto g = evaluate(d, "global", "eval_global");
    REQUIRE(g.code == 0);
    const auto csv = slurp(d / "eval_global" / "report.csv");
    CHECK(csv.rfind("scope,map,map_at_r,mrr,p_at_1,r_precision,queries,references,skipped\n", 0) == 0);
    CHECK(csv_value(csv, "p_at_1") >= 0.9);
    CHECK(csv_value(csv, "queries") > 0);
    CHECK(g.output.find("MAP@R") != std::string::npos);

    REQUIRE(evaluate(d, "local", "eval_local").code == 0);
    CHECK(csv_value(slurp(d / "eval_local" / "report.csv"), "p_at_1") >= 0.9);

    // query/reference manifest agrees with the report
    const auto manifest = slurp(d / "eval_global" / "queries.csv");
    CHECK(manifest.rfind("role,instance_uuid,label\n", 0) == 0);
    std::size_t queries = 0, pos = 0;
    while ((pos = manifest.find("\nquery,", pos)) != std::string::npos) {
        ++queries;
        ++pos;
    }
    CHECK(queries == static_cast<std::size_t>(csv_value(csv, "queries")));
}

TEST_CASE("every run writes a manifest with config hash, seed and version")
{
    TempDir d("cli_manifest");
    prepare(d);
    const auto m = comicreid::Json::parse(slurp(d / "split" / "manifest.json"));
    CHECK(m["command"] == "split");
    CHECK(m["seed"] == 7);
    CHECK(m["version"] == COMICREID_VERSION);
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m["inputs"].size() == 1);
    CHECK(m["config"]["sequence_threshold"].get<int>() > 0);

    // the hash follows the resolved config
    REQUIRE(run({"synth", "--identities", "20", "--seed", "8", "--out", (d / "syn8").string()}).code == 0);
    const auto a = comicreid::Json::parse(slurp(d / "syn" / "manifest.json"));
    const auto b = comicreid::Json::parse(slurp(d / "syn8" / "manifest.json"));
    CHECK(a["config_hash"] != b["config_hash"]);
}

TEST_CASE("missing inputs are data errors naming the path")
{
    TempDir d("cli_missing");
    prepare(d);
    const auto missing = (d / "nowhere" / "embeddings.jsonl").string();
    const auto r = run({"evaluate", "--sequences", (d / "split" / "test.jsonl").string(), "--embeddings", missing,
                        "--out", (d / "ev").string()});
    CHECK(r.code == 2);
    CHECK(r.output.find(missing) != std::string::npos);

    const auto f = run({"finetune", "--train", (d / "nope.jsonl").string(), "--val", (d / "nope.jsonl").string(),
                        "--features", (d / "syn" / "features.jsonl").string(), "--out", (d / "ft").string()});
    CHECK(f.code == 2);

    // malformed record file
    comicreid::write_text_file(d / "broken.jsonl", "{\"uuid\": 3\n");
    CHECK(run({"evaluate", "--sequences", (d / "split" / "test.jsonl").string(), "--embeddings",
               (d / "broken.jsonl").string(), "--out", (d / "ev").string()})
              .code == 2);
}

TEST_CASE("usage and configuration errors exit with 1")
{
    TempDir d("cli_usage");
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"synth"}).code == 1); // --out missing
    CHECK(run({"synth", "--out", (d / "s").string(), "--set", "no_such_key=1"}).code == 1);
    CHECK(run({"synth", "--out", (d / "s").string(), "--set", "identities"}).code == 1);

    comicreid::write_text_file(d / "cfg.json", R"({"identities": 12, "colour": "blue"})");
    const auto r = run({"synth", "--out", (d / "s").string(), "--config", (d / "cfg.json").string()});
    CHECK(r.code == 1);
    CHECK(r.output.find("colour") != std::string::npos);

    comicreid::write_text_file(d / "bad.json", "{identities");
    CHECK(run({"synth", "--out", (d / "s").string(), "--config", (d / "bad.json").string()}).code == 1);
    CHECK(run({"evaluate", "--sequences", "x", "--out", "y", "--scope", "sideways"}).code != 0);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("config file values apply and flags override them")
{
    TempDir d("cli_config");
    comicreid::write_text_file(d / "cfg.json", R"({"identities": 12, "series": 3, "seed": 5})");
    REQUIRE(run({"synth", "--out", (d / "a").string(), "--config", (d / "cfg.json").string()}).code == 0);
    auto m = comicreid::Json::parse(slurp(d / "a" / "manifest.json"));
    CHECK(m["config"]["identities"] == 12);
    CHECK(m["config"]["series"] == 3);
    CHECK(m["seed"] == 5);

    REQUIRE(run({"synth", "--out", (d / "b").string(), "--config", (d / "cfg.json").string(), "--seed", "9",
                 "--set", "series=2"})
                .code == 0);
    m = comicreid::Json::parse(slurp(d / "b" / "manifest.json"));
    CHECK(m["seed"] == 9);
    CHECK(m["config"]["series"] == 2);
    CHECK(m["config"]["identities"] == 12);
}

TEST_CASE("diverging training is a numeric failure")
{
    TempDir d("cli_nan");
    prepare(d);
    const auto r = finetune(d, "ft", {"--set", "lr=1e300", "--set", "grad_clip=1e300", "--set", "optimizer=sgd"});
    CHECK(r.code == 3);
    const auto p = run({"pretrain", "--features", (d / "syn" / "features.jsonl").string(), "--steps", "20", "--set",
                        "lr=1e300", "--set", "grad_clip=1e300", "--out", (d / "pre").string()});
    CHECK(p.code == 3);
}

TEST_CASE("reruns are byte-identical")
{
    TempDir d("cli_rerun");
    prepare(d);
    REQUIRE(finetune(d, "ft").code == 0);
    REQUIRE(evaluate(d, "global", "e1").code == 0);
    REQUIRE(evaluate(d, "global", "e2").code == 0);
    std::string why;
    CHECK_MESSAGE(same_tree(d / "e1", d / "e2", &why), why);
    REQUIRE(finetune(d, "ft2").code == 0);
    CHECK_MESSAGE(same_tree(d / "ft", d / "ft2", &why), why);
}

TEST_CASE("ingest and split artifacts")
{
    TempDir d("cli_ingest");
    prepare(d);
    REQUIRE(run({"ingest", "--detections", (d / "syn" / "detections.csv").string(), "--out", (d / "ing").string()})
                .code == 0);
    const auto seqs = comicreid::read_sequences(d / "ing" / "sequences.jsonl");
    CHECK(!seqs.empty());
    for (const auto& s : seqs)
        CHECK(s.panels.size() == 4);
    const auto split = slurp(d / "split" / "split.csv");
    CHECK(split.rfind("series_id,split\n", 0) == 0);
    CHECK(split.find(",test\n") != std::string::npos);
}

TEST_CASE("assign writes one label per instance")
{
    TempDir d("cli_assign");
    prepare(d);
    REQUIRE(finetune(d, "ft").code == 0);
    REQUIRE(run({"assign", "--sequences", (d / "split" / "test.jsonl").string(), "--features",
                 (d / "syn" / "features.jsonl").string(), "--projector", (d / "ft" / "projector.json").string(),
                 "--out", (d / "as").string()})
                .code == 0);
    const auto csv = slurp(d / "as" / "assignments.csv");
    CHECK(csv.rfind("sequence_id,instance_uuid,label\n", 0) == 0);
    std::size_t rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
    std::size_t instances = 0;
    for (const auto& s : comicreid::read_sequences(d / "split" / "test.jsonl"))
        instances += s.instances.size();
    CHECK(rows == instances);

    REQUIRE(run({"calibrate", "--sequences", (d / "split" / "val.jsonl").string(), "--features",
                 (d / "syn" / "features.jsonl").string(), "--projector", (d / "ft" / "projector.json").string(),
                 "--method", "midpoint", "--out", (d / "cal").string()})
                .code == 0);
    const auto cal = comicreid::Json::parse(slurp(d / "cal" / "calibration.json"));
    CHECK(cal["threshold"].get<double>() ==
          doctest::Approx((cal["mean_similar"].get<double>() + cal["mean_dissimilar"].get<double>()) / 2));
}

TEST_CASE("serve answers over HTTP and stops on SIGTERM")
{
    TempDir d("cli_serve");
    prepare(d);
    fs::create_directories(d / "static");
    comicreid::write_text_file(d / "static" / "index.html", "ui");
    Server srv({"--sequences", (d / "split" / "test.jsonl").string(), "--state", (d / "state").string(), "--static",
                (d / "static").string()},
               d / "port");
    REQUIRE(srv.ok());
    auto r = srv.http().Get("/sequences?limit=2");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(srv.http().Get("/static/index.html")->body == "ui");
    CHECK(srv.stop() == 0);
    CHECK(fs::exists(d / "state" / "serve_manifest.json"));
}
