#include "comicreid/ingest.hpp"
#include "comicreid/service.hpp"
#include "comicreid/synth.hpp"
#include "comicreid/trainer.hpp"

#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <set>
#include <thread>

using namespace comicreid;
using testsupport::TempDir;

namespace {

// Synthetic corpus written to disk with annotations stripped from every sequence.
struct Fixture {
    TempDir dir{"service"};
    SynthDataset ds;
    std::vector<PanelSequence> blank;

    explicit Fixture(int identities = 6, int series = 2)
    {
        SynthConfig sc;
        sc.identities = identities;
        sc.series = series; // 2 series puts two characters on most pages
        ds = generate_synthetic(sc);
        blank = ds.sequences;
        for (auto& s : blank)
            s.annotations.clear();
        write_sequences(blank, dir / "sequences.jsonl");
        write_embeddings(records_from_features(ds.features), dir / "features.jsonl");
        std::filesystem::create_directories(dir / "static");
        write_text_file(dir / "static" / "index.html", "<html>annotator</html>");
    }

    ServiceConfig config() const
    {
        ServiceConfig cfg;
        cfg.sequences = dir / "sequences.jsonl";
        cfg.state_dir = dir / "state";
        cfg.static_dir = dir / "static";
        cfg.page_size = 4;
        return cfg;
    }

    // first sequence with at least 4 instances
    const PanelSequence& busy() const
    {
        for (const auto& s : blank)
            if (s.instances.size() >= 4)
                return s;
        throw std::runtime_error("fixture has no sequence with 4 instances");
    }
};

class Running {
public:
    explicit Running(const ServiceConfig& cfg) : svc_(cfg)
    {
        port_ = svc_.bind("127.0.0.1", 0);
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { svc_.run(); });
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        for (int i = 0; i < 200; ++i) {
            if (auto r = client_->Get("/health"); r && r->status == 200)
                break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    ~Running()
    {
        svc_.stop();
        thread_.join();
    }

    httplib::Client& http() { return *client_; }
    AnnotatorService& service() { return svc_; }
    int port() const { return port_; }

private:
    AnnotatorService svc_;
    int port_ = -1;
    std::thread thread_;
    std::unique_ptr<httplib::Client> client_;
};

Json body(const httplib::Result& r)
{
    REQUIRE(r);
    return Json::parse(r->body);
}

httplib::Result post_group(httplib::Client& c, const std::string& seq, const std::vector<std::string>& uuids, long rev,
                           bool reassign = false, const std::string& mode = "multiple_character")
{
    const Json j{{"uuids", uuids}, {"expected_revision", rev}, {"reassign", reassign}, {"mode", mode}};
    return c.Post("/sequences/" + seq + "/identities", httplib::Headers{{"X-Annotator", "tester"}}, j.dump(),
                  "application/json");
}

} // namespace

TEST_CASE("service pages through sequences with a cursor")
{
    Fixture f;
    Running srv(f.config());
    std::vector<std::string> seen;
    std::string cursor;
    for (int guard = 0; guard < 100; ++guard) {
        auto r = srv.http().Get("/sequences?limit=4" + (cursor.empty() ? "" : "&cursor=" + cursor));
        const Json j = body(r);
        CHECK(r->status == 200);
        CHECK(j["items"].size() <= 4);
        for (const auto& it : j["items"])
            seen.push_back(it["sequence_id"]);
        if (j["next_cursor"].is_null())
            break;
        cursor = j["next_cursor"];
    }
    std::vector<std::string> expected;
    for (const auto& s : f.blank)
        expected.push_back(s.sequence_id);
    std::sort(expected.begin(), expected.end());
    CHECK(seen == expected);
}

TEST_CASE("service reports unknown sequences and malformed bodies")
{
    Fixture f;
    Running srv(f.config());
    CHECK(srv.http().Get("/sequences/nope")->status == 404);
    CHECK(post_group(srv.http(), "nope", {"x"}, 0)->status == 404);
    const auto& s = f.busy();
    CHECK(srv.http().Post("/sequences/" + s.sequence_id + "/identities", "{not json", "application/json")->status == 400);
    CHECK(srv.http().Post("/sequences/" + s.sequence_id + "/identities", R"({"uuids":[]})", "application/json")->status ==
          400);
}

TEST_CASE("identity commits bump the revision and build groups")
{
    Fixture f;
    Running srv(f.config());
    const auto& s = f.busy();
    const auto u = [&](int i) { return s.instances[i].uuid; };

    auto r1 = post_group(srv.http(), s.sequence_id, {u(0), u(1)}, 0);
    CHECK(r1->status == 200);
    CHECK(body(r1)["revision"] == 1);
    auto r2 = post_group(srv.http(), s.sequence_id, {u(2)}, 1);
    CHECK(r2->status == 200);
    CHECK(body(r2)["revision"] == 2);

    const Json j = body(srv.http().Get("/sequences/" + s.sequence_id));
    CHECK(j["revision"] == 2);
    REQUIRE(j["annotations"].size() == 2);
    CHECK(j["annotations"][0]["members"].size() == 2);
    CHECK(!j.contains("suggestions"));
    CHECK(j["panels"].size() == 4);

    SUBCASE("stale revision is a conflict")
    {
        auto r = post_group(srv.http(), s.sequence_id, {u(3)}, 1);
        CHECK(r->status == 409);
        CHECK(body(r)["revision"] == 2);
    }
    SUBCASE("unknown uuid is rejected")
    {
        CHECK(post_group(srv.http(), s.sequence_id, {"not-an-instance"}, 2)->status == 422);
    }
    SUBCASE("overlap needs reassign")
    {
        CHECK(post_group(srv.http(), s.sequence_id, {u(1), u(3)}, 2)->status == 422);
        auto r = post_group(srv.http(), s.sequence_id, {u(1), u(3)}, 2, true);
        CHECK(r->status == 200);
        const auto st = srv.service().store().get(s.sequence_id);
        REQUIRE(st);
        int holders = 0;
        for (const auto& a : st->sequence.annotations)
            holders += static_cast<int>(std::count(a.member_uuids.begin(), a.member_uuids.end(), u(1)));
        CHECK(holders == 1);
        CHECK(st->sequence.annotations.size() == 3);
    }
    SUBCASE("reassigning every member of a group removes it")
    {
        CHECK(post_group(srv.http(), s.sequence_id, {u(2)}, 2, true)->status == 200);
        CHECK(srv.service().store().get(s.sequence_id)->sequence.annotations.size() == 2);
    }
}

TEST_CASE("single-character mode allows one instance per panel")
{
    Fixture f;
    Running srv(f.config());
    for (const auto& s : f.blank) {
        for (std::size_t a = 0; a < s.instances.size(); ++a)
            for (std::size_t b = a + 1; b < s.instances.size(); ++b)
                if (s.instances[a].panel == s.instances[b].panel) {
                    const std::vector<std::string> group{s.instances[a].uuid, s.instances[b].uuid};
                    CHECK(post_group(srv.http(), s.sequence_id, group, 0, false, "single_character")->status == 422);
                    CHECK(post_group(srv.http(), s.sequence_id, group, 0, false, "multiple_character")->status == 200);
                    return;
                }
    }
    FAIL("no sequence has two instances on one panel");
}

TEST_CASE("export is deterministic and feeds fine-tuning")
{
    Fixture f(20, 6);
    SUBCASE("empty store")
    {
        Running srv(f.config());
        auto a = srv.http().Get("/export");
        auto b = srv.http().Get("/export");
        CHECK(a->status == 200);
        CHECK(a->body == b->body);
        for (const auto& s : parse_sequences(a->body))
            CHECK(s.annotations.empty());
    }
    SUBCASE("annotated store")
    {
        // replay the synthetic ground truth through the HTTP surface
        Running srv(f.config());
        for (const auto& s : f.ds.sequences) {
            long rev = 0;
            for (const auto& a : s.annotations) {
                auto r = post_group(srv.http(), s.sequence_id, a.member_uuids, rev);
                REQUIRE(r->status == 200);
                rev = body(r)["revision"];
            }
        }
        const auto text = srv.http().Get("/export")->body;
        CHECK(text == srv.http().Get("/export")->body);
        const auto seqs = parse_sequences(text);
        REQUIRE(seqs.size() == f.ds.sequences.size());
        FinetuneConfig cfg;
        cfg.epochs = 1;
        cfg.seed = 3;
        SplitConfig sc;
        sc.sequence_threshold = seqs.size() * 6 / 10;
        const auto split = split_sequences(seqs, sc);
        const auto res = finetune(split.train, split.val, f.ds.features, cfg);
        CHECK(res.history.size() == 1);
        CHECK(std::isfinite(res.history[0].loss));
    }
}

TEST_CASE("suggestions appear only with a model and are cached")
{
    Fixture f;
    const auto& s = f.busy();
    {
        Running srv(f.config());
        CHECK(!body(srv.http().Get("/sequences/" + s.sequence_id)).contains("suggestions"));
    }
    ProjectorConfig pc;
    pc.input_dim = feature_dim(f.ds.features);
    Projector<double> p(pc);
    Rng rng(1);
    p.initialize(rng);
    save_projector(p, f.dir / "projector.json");

    auto cfg = f.config();
    cfg.features = f.dir / "features.jsonl";
    cfg.projector = f.dir / "projector.json";
    Running srv(cfg);
    const Json j = body(srv.http().Get("/sequences/" + s.sequence_id));
    REQUIRE(j.contains("suggestions"));
    CHECK(j["suggestions"].size() == s.instances.size());
    for (const auto& inst : s.instances)
        CHECK(j["suggestions"].contains(inst.uuid));
    const Json again = body(srv.http().Get("/sequences/" + s.sequence_id));
    CHECK(again["suggestions"] == j["suggestions"]);

    cfg.projector.reset();
    CHECK_THROWS_AS(AnnotatorService{cfg}, std::invalid_argument);
}

TEST_CASE("concurrent commits against one revision: exactly one wins")
{
    Fixture f;
    Running srv(f.config());
    const auto& s = f.busy();
    for (int round = 0; round < 5; ++round) {
        const long rev = srv.service().store().get(s.sequence_id)->revision;
        int codes[2] = {0, 0};
        auto worker = [&](int k) {
            httplib::Client c("127.0.0.1", srv.port());
            // both claim the same instance; reassign so only the revision can reject
            auto r = post_group(c, s.sequence_id, {s.instances[0].uuid}, rev, true);
            codes[k] = r ? r->status : -1;
        };
        std::thread a(worker, 0), b(worker, 1);
        a.join();
        b.join();
        std::multiset<int> got{codes[0], codes[1]};
        CHECK(got == std::multiset<int>{200, 409});
    }
}

TEST_CASE("restart restores state from snapshot and event log")
{
    Fixture f;
    auto cfg = f.config();
    cfg.snapshot_every = 2;
    const auto& s = f.busy();
    std::string before;
    {
        Running srv(cfg);
        long rev = 0;
        for (int i = 0; i < 3; ++i) {
            auto r = post_group(srv.http(), s.sequence_id, {s.instances[i].uuid}, rev);
            REQUIRE(r->status == 200);
            rev = body(r)["revision"];
        }
        auto c = srv.http().Post("/sequences/" + s.sequence_id + "/complete", Json{{"expected_revision", rev}}.dump(),
                                 "application/json");
        CHECK(c->status == 200);
        before = srv.http().Get("/export")->body;
    }
    CHECK(std::filesystem::exists(cfg.state_dir / "snapshot.json"));
    Running srv(cfg);
    CHECK(srv.http().Get("/export")->body == before);
    const auto st = srv.service().store().get(s.sequence_id);
    CHECK(st->complete);
    CHECK(st->revision == 4);
    CHECK(srv.service().store().events() == 4);
    // identity numbering continues where it stopped
    auto r = post_group(srv.http(), s.sequence_id, {s.instances[3].uuid}, 4);
    CHECK(body(r)["identity_id"] == "id4");
}

TEST_CASE("static files are served")
{
    Fixture f;
    Running srv(f.config());
    auto r = srv.http().Get("/static/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>annotator</html>");
}
