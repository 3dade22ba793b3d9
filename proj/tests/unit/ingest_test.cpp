#include "comicreid/codec.hpp"
#include "comicreid/ingest.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace comicreid;

namespace {

Detection make_det(PartKind kind, int index, BBox box)
{
    Detection d;
    d.kind = kind;
    d.index = index;
    d.bbox = box;
    d.panel = {"1", "1", "1"};
    return d;
}

std::pair<std::vector<Detection>, std::vector<Detection>> split_kinds(const std::vector<Detection>& dets)
{
    std::vector<Detection> faces, bodies;
    for (const auto& d : dets)
        (d.kind == PartKind::Face ? faces : bodies).push_back(d);
    return {faces, bodies};
}

PanelSequence seq_of(const std::string& id, const std::string& series)
{
    PanelSequence s;
    s.sequence_id = id;
    for (int p = 0; p < 4; ++p)
        s.panels.push_back({series, "1", std::to_string(p)});
    return s;
}

} // namespace

TEST_CASE("filter_detections thresholds are inclusive")
{
    PairingConfig cfg;
    const auto small = make_det(PartKind::Face, 0, {0, 0, 10, 5, 0.99});  // area 50
    const auto edge = make_det(PartKind::Face, 1, {0, 0, 8, 8, 0.95});    // area 64, score at threshold
    const auto weak = make_det(PartKind::Body, 0, {0, 0, 100, 100, 0.949});
    const auto out = filter_detections({small, edge, weak}, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == edge);
}

TEST_CASE("filter_detections equals an independent predicate scan")
{
    PairingConfig cfg;
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Detection> dets;
        for (int i = 0; i < 100; ++i) {
            auto box = testsupport::random_box(rng);
            box.x1 = box.x0 + 1 + static_cast<std::int64_t>(rng() % 12);
            box.y1 = box.y0 + 1 + static_cast<std::int64_t>(rng() % 12);
            box.score = 0.9 + 0.1 * std::uniform_real_distribution<double>(0, 1)(rng);
            dets.push_back(make_det(i % 2 ? PartKind::Face : PartKind::Body, i, box));
        }
        std::vector<Detection> expected;
        for (const auto& d : dets) {
            const long long w = d.bbox.x1 - d.bbox.x0, h = d.bbox.y1 - d.bbox.y0;
            if (!(w * h < 64) && !(d.bbox.score < 0.95))
                expected.push_back(d);
        }
        CHECK(filter_detections(dets, cfg) == expected);
    }
}

TEST_CASE("pairing reproduces the printed character table")
{
    const auto dets = read_detections(testsupport::fixture("series1551_page1_panel2.csv"));
    auto [faces, bodies] = split_kinds(dets);
    Rng rng(1);
    const auto insts = pair_face_body(faces, bodies, PairingConfig{}, rng);
    REQUIRE(insts.size() == 5);
    // faces in index order, then the unpaired body
    CHECK(insts[0].face->index == 0);
    CHECK(insts[0].body->index == 1);
    CHECK(insts[1].face->index == 1);
    CHECK(insts[1].body->index == 0);
    CHECK(insts[2].face->index == 2);
    CHECK_FALSE(insts[2].has_body());
    CHECK(insts[3].face->index == 3);
    CHECK(insts[3].body->index == 3); // also inside body 1, but body 3's top is 7px away vs 328px
    CHECK_FALSE(insts[4].has_face());
    CHECK(insts[4].body->index == 2);
    for (const auto& inst : insts)
        CHECK(inst.panel == PanelLocator{"1551", "1", "2"});
}

TEST_CASE("a face inside two nested bodies takes the smaller top-y gap")
{
    const auto face = make_det(PartKind::Face, 0, {50, 45, 70, 65, 0.99});
    const auto near = make_det(PartKind::Body, 0, {30, 40, 90, 200, 0.99}); // gap 5
    const auto far = make_det(PartKind::Body, 1, {20, 5, 100, 220, 0.99});  // gap 40
    // enumerate the admissible single-face assignments and keep the minimum gap
    std::int64_t best_gap = -1;
    int best = -1;
    for (const auto& b : {near, far}) {
        const double ratio = static_cast<double>(intersection_area(face.bbox, b.bbox)) / face.bbox.area();
        const auto gap = std::abs(face.bbox.y0 - b.bbox.y0);
        if (ratio > 0.95 && (best < 0 || gap < best_gap)) {
            best_gap = gap;
            best = b.index;
        }
    }
    REQUIRE(best == 0);
    Rng rng(2);
    const auto insts = pair_face_body({face}, {far, near}, PairingConfig{}, rng);
    REQUIRE(insts.size() == 2);
    CHECK(insts[0].body->index == best);
    CHECK(insts[1].body->index == 1);
}

TEST_CASE("pairing is a partial matching on random panels")
{
    Rng rng(33);
    PairingConfig cfg;
    cfg.min_overlap_ratio = 0.5;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Detection> faces, bodies;
        const int nf = static_cast<int>(rng() % 6), nb = static_cast<int>(rng() % 6);
        for (int i = 0; i < nb; ++i) {
            auto b = testsupport::random_box(rng);
            bodies.push_back(make_det(PartKind::Body, i, {b.x0 / 3, b.y0 / 3, b.x0 / 3 + 200, b.y0 / 3 + 300, 1.0}));
        }
        for (int i = 0; i < nf; ++i) {
            const auto x = static_cast<std::int64_t>(rng() % 400), y = static_cast<std::int64_t>(rng() % 400);
            faces.push_back(make_det(PartKind::Face, i, {x, y, x + 30, y + 30, 1.0}));
        }
        const auto insts = pair_face_body(faces, bodies, cfg, rng);
        std::set<int> fs, bs;
        for (const auto& inst : insts) {
            CHECK((inst.has_face() || inst.has_body()));
            if (inst.face)
                CHECK(fs.insert(inst.face->index).second);
            if (inst.body)
                CHECK(bs.insert(inst.body->index).second);
            if (inst.face && inst.body) {
                const double ratio =
                    static_cast<double>(intersection_area(inst.face->bbox, inst.body->bbox)) / inst.face->bbox.area();
                CHECK(ratio > cfg.min_overlap_ratio);
            }
        }
        CHECK(fs.size() == static_cast<std::size_t>(nf));
        CHECK(bs.size() == static_cast<std::size_t>(nb));
    }
}

TEST_CASE("face_square_crop_box geometry")
{
    CHECK(face_square_crop_box({0, 0, 10, 10, 1.0}, 1.2, 100, 100) == BBox{0, 0, 12, 12, 1.0});
    CHECK(face_square_crop_box({90, 90, 100, 100, 1.0}, 1.2, 100, 100) == BBox{88, 88, 100, 100, 1.0});
    CHECK(face_square_crop_box({20, 30, 50, 60, 1.0}, 1.0, 1000, 1000) == BBox{20, 30, 50, 60, 1.0});
    // longest side drives the square; centre (30, 45)
    CHECK(face_square_crop_box({20, 40, 40, 50, 1.0}, 1.0, 1000, 1000) == BBox{20, 35, 40, 55, 1.0});
    // image narrower than the side: shrink to the image
    CHECK(face_square_crop_box({0, 0, 10, 10, 1.0}, 2.0, 8, 50) == BBox{0, 1, 8, 9, 1.0});
    CHECK_THROWS_AS(face_square_crop_box({5, 5, 5, 9, 1.0}, 1.2, 100, 100), DataError);
}

TEST_CASE("split_sequences follows the ascending-series loop")
{
    std::vector<PanelSequence> seqs;
    const std::vector<std::pair<std::string, int>> counts{{"A", 1}, {"B", 2}, {"C", 3}, {"D", 5}};
    for (const auto& [series, n] : counts)
        for (int i = 0; i < n; ++i)
            seqs.push_back(seq_of(series + std::to_string(i), series));

    SplitConfig cfg;
    cfg.sequence_threshold = 6;
    cfg.seed = 4;
    auto res = split_sequences(seqs, cfg);
    CHECK(res.pool_series == std::vector<std::string>{"A", "B", "C"});
    CHECK(res.series_split.at("D") == Split::Train);

    cfg.sequence_threshold = 0;
    res = split_sequences(seqs, cfg);
    CHECK(res.pool_series.empty());
    CHECK(res.train.size() == seqs.size());

    cfg.sequence_threshold = 12;
    CHECK_THROWS_AS(split_sequences(seqs, cfg), DataError);
}

TEST_CASE("split_sequences partitions, separates series, and is seed-deterministic")
{
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PanelSequence> seqs;
        const int nseries = 3 + static_cast<int>(rng() % 20);
        for (int s = 0; s < nseries; ++s) {
            const int n = 1 + static_cast<int>(rng() % 9);
            for (int i = 0; i < n; ++i)
                seqs.push_back(seq_of("s" + std::to_string(s) + "_" + std::to_string(i), "S" + std::to_string(s)));
        }
        SplitConfig cfg;
        cfg.sequence_threshold = rng() % (seqs.size() + 1);
        cfg.seed = rng();
        const auto a = split_sequences(seqs, cfg);
        const auto b = split_sequences(seqs, cfg);
        CHECK(a.series_split == b.series_split);
        CHECK(a.train.size() + a.val.size() + a.test.size() == seqs.size());
        std::set<std::string> ids;
        for (const auto* part : {&a.train, &a.val, &a.test})
            for (const auto& s : *part)
                CHECK(ids.insert(s.sequence_id).second);
        std::set<std::string> val_series, test_series;
        for (const auto& s : a.val)
            val_series.insert(s.series_id());
        for (const auto& s : a.test)
            test_series.insert(s.series_id());
        for (const auto& s : val_series)
            CHECK(test_series.count(s) == 0);
        std::size_t pool = 0;
        for (const auto& s : seqs)
            if (std::find(a.pool_series.begin(), a.pool_series.end(), s.series_id()) != a.pool_series.end())
                ++pool;
        CHECK(pool >= cfg.sequence_threshold);
    }
}

TEST_CASE("split at the 800-sequence threshold on a dataset-sized corpus")
{
    // 3169 sequences spread over series with a long-tailed size distribution
    Rng rng(2023);
    std::vector<PanelSequence> seqs;
    int s = 0;
    while (seqs.size() < 3169) {
        const int n = 1 + static_cast<int>(std::min<std::uint64_t>(rng() % 60, rng() % 60));
        for (int i = 0; i < n && seqs.size() < 3169; ++i)
            seqs.push_back(seq_of("q" + std::to_string(seqs.size()), "S" + std::to_string(s)));
        ++s;
    }
    SplitConfig cfg; // threshold 800
    const auto res = split_sequences(seqs, cfg);
    std::size_t pool = 0;
    for (const auto& seq : seqs)
        if (std::find(res.pool_series.begin(), res.pool_series.end(), seq.series_id()) != res.pool_series.end())
            ++pool;
    CHECK(pool >= 800);
    CHECK(res.val.size() + res.test.size() <= pool);
    CHECK(res.val.size() > 0);
    CHECK(res.test.size() > 0);
}

TEST_CASE("build_sequences windows consecutive panels")
{
    Rng rng(9);
    std::vector<CharacterInstance> insts;
    for (int p = 0; p < 11; ++p) {
        CharacterInstance inst;
        inst.uuid = make_uuid(rng);
        inst.panel = {"5", "2", std::to_string(p)};
        inst.body = make_det(PartKind::Body, 0, {0, 0, 10, 10, 1.0});
        inst.body->panel = inst.panel;
        insts.push_back(inst);
    }
    const auto seqs = build_sequences(insts, 3);
    REQUIRE(seqs.size() == 3); // panels 0-3, 3-6, 6-9
    CHECK(seqs[1].panels.front().panel_id == "3");
    CHECK(seqs[2].panels.back().panel_id == "9");
    CHECK(seqs[0].instances.back().uuid == seqs[1].instances.front().uuid);
    CHECK(build_sequences(insts, 4).size() == 2);
}
