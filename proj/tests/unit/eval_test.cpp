#include "comicreid/cluster.hpp"
#include "comicreid/evaluation.hpp"

#include "eval_oracles.hpp"

#include <doctest.h>

using namespace comicreid;

namespace {

std::vector<std::uint8_t> flags(std::initializer_list<int> v)
{
    std::vector<std::uint8_t> out;
    for (int x : v)
        out.push_back(static_cast<std::uint8_t>(x));
    return out;
}

CharacterInstance inst(const std::string& uuid, const std::string& series = "S")
{
    CharacterInstance c;
    c.uuid = uuid;
    c.panel = {series, "1", "1"};
    Detection d;
    d.kind = PartKind::Face;
    d.bbox = {0, 0, 10, 10, 1.0};
    d.panel = c.panel;
    c.face = d;
    return c;
}

PanelSequence seq(const std::string& id, const std::string& series,
                  const std::vector<std::pair<std::string, std::vector<std::string>>>& identities)
{
    PanelSequence s;
    s.sequence_id = id;
    for (int p = 0; p < 4; ++p)
        s.panels.push_back({series, "1", std::to_string(p)});
    for (const auto& [label, members] : identities) {
        for (const auto& u : members)
            s.instances.push_back(inst(u, series));
        s.annotations.push_back({label, members});
    }
    return s;
}

VectorXd vec(std::initializer_list<double> v)
{
    VectorXd out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v)
        out(i++) = x;
    return out;
}

} // namespace

TEST_CASE("metric hand examples")
{
    const auto m = retrieval_metrics(flags({1, 0, 1}));
    CHECK(m.ap == doctest::Approx(0.5 * (1 + 2.0 / 3.0)).epsilon(1e-12));
    CHECK(m.ap_at_r == 0.5);
    CHECK(m.rr == 1.0);
    CHECK(m.p_at_1 == 1.0);
    CHECK(m.r_precision == 0.5);

    const auto perfect = retrieval_metrics(flags({1, 1, 1, 0, 0}));
    CHECK(perfect.ap == 1.0);
    CHECK(perfect.ap_at_r == 1.0);
    CHECK(perfect.rr == 1.0);
    CHECK(perfect.p_at_1 == 1.0);
    CHECK(perfect.r_precision == 1.0);

    const auto second = retrieval_metrics(flags({0, 1, 0}));
    CHECK(second.rr == 0.5);
    CHECK(second.p_at_1 == 0.0);
    CHECK(second.ap == 0.5);
    CHECK_THROWS_AS(retrieval_metrics(flags({0, 0})), std::invalid_argument);

    // literal indicator variant counts hits in the top R
    const auto lit = retrieval_metrics(flags({0, 1, 1}), MapAtRMode::Indicator);
    CHECK(lit.ap_at_r == 0.5);
    CHECK(retrieval_metrics(flags({0, 1, 1})).ap_at_r == 0.25);
}

TEST_CASE("metrics equal the brute-force definitions on random rankings")
{
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        std::vector<std::uint8_t> rel(n);
        for (auto& f : rel)
            f = static_cast<std::uint8_t>(rng() % 3 == 0);
        rel[rng() % n] = 1;
        const auto got = retrieval_metrics(rel);
        const auto want = oracle::metrics(rel);
        CHECK(std::abs(got.ap - want.ap) < 1e-9);
        CHECK(std::abs(got.ap_at_r - want.ap_at_r) < 1e-9);
        CHECK(std::abs(got.rr - want.rr) < 1e-9);
        CHECK(got.p_at_1 == want.p_at_1);
        CHECK(std::abs(got.r_precision - want.r_precision) < 1e-9);
        CHECK(got.ap_at_r <= got.ap + 1e-12);
        CHECK(got.ap <= 1.0 + 1e-12);
        CHECK((got.r_precision >= 0.0 && got.r_precision <= 1.0));
        std::size_t R = 0;
        for (auto f : rel)
            R += f;
        if (R == 1)
            CHECK(got.rr >= got.ap_at_r);
    }
}

TEST_CASE("aggregate is the unweighted mean")
{
    std::vector<RetrievalMetrics> per{retrieval_metrics(flags({1, 0})), retrieval_metrics(flags({0, 1}))};
    const auto r = aggregate(per, "local");
    CHECK(r.p_at_1 == 0.5);
    CHECK(r.mrr == 0.75);
    CHECK(r.queries == 2);
    CHECK(report_csv(r).find("local,0.750000,0.500000,0.750000,0.500000") != std::string::npos);
}

TEST_CASE("local evaluation on a three-instance sequence")
{
    const auto s = seq("q", "S", {{"A", {"a1", "a2"}}, {"B", {"b1"}}});
    EmbeddingTable emb{{"a1", vec({1, 0})}, {"a2", vec({0.9, 0.1})}, {"b1", vec({0, 1})}};
    const auto r = local_eval({s}, emb);
    CHECK(r.queries == 2);
    CHECK(r.skipped == 1);
    CHECK(r.p_at_1 == 1.0);

    // a lone instance contributes nothing; nothing at all is an error
    CHECK_THROWS_AS(local_eval({seq("z", "S", {{"A", {"a1"}}})}, emb), DataError);
    CHECK_THROWS_AS(local_eval({s}, EmbeddingTable{{"a1", vec({1, 0})}}), DataError);
}

TEST_CASE("local evaluation with random embeddings has P@1 near one third")
{
    Rng rng(32);
    std::normal_distribution<double> nd;
    std::vector<PanelSequence> seqs;
    EmbeddingTable emb;
    for (int k = 0; k < 3000; ++k) {
        const auto p = std::to_string(k) + "_";
        seqs.push_back(seq("s" + std::to_string(k), "S", {{"A", {p + "a1", p + "a2"}}, {"B", {p + "b1", p + "b2"}}}));
        for (const auto* u : {"a1", "a2", "b1", "b2"})
            emb[p + u] = vec({nd(rng), nd(rng), nd(rng), nd(rng)});
    }
    const auto r = local_eval(seqs, emb);
    CHECK(r.p_at_1 == doctest::Approx(1.0 / 3.0).epsilon(0.15));
    // order independence
    std::reverse(seqs.begin(), seqs.end());
    CHECK(local_eval(seqs, emb).map == r.map);
}

TEST_CASE("global curation")
{
    const auto s = seq("q", "S", {{"X", {"x1", "x2", "x3"}}, {"Y", {"y1"}}});
    const auto cur = curate_global({s});
    REQUIRE(cur.queries.size() == 1);
    CHECK(cur.queries[0].uuid == "x1");
    CHECK(cur.references.size() == 3);
    const auto singles = curate_global({seq("r", "T", {{"X", {"x1"}}, {"Y", {"y1"}}})});
    CHECK(singles.queries.empty());
    CHECK(singles.references.size() == 2);
    CHECK_THROWS_AS(curate_global({}), DataError);
}

TEST_CASE("global evaluation pools references across series")
{
    const auto s1 = seq("q1", "S", {{"X", {"x1", "x2"}}, {"Y", {"y1"}}});
    const auto s2 = seq("q2", "T", {{"Z", {"z1", "z2"}}});
    EmbeddingTable emb{{"x1", vec({1, 0, 0})}, {"x2", vec({1, 0.1, 0})}, {"y1", vec({0, 1, 0})},
                       {"z1", vec({0, 0, 1})}, {"z2", vec({0.1, 0, 1})}};
    const auto r = global_eval(curate_global({s1, s2}), emb);
    CHECK(r.queries == 2);
    CHECK(r.references == 3);
    CHECK(r.p_at_1 == 1.0);
    CHECK(r.map_at_r == 1.0);
}

TEST_CASE("threshold calibration")
{
    const auto mid = calibrate_threshold({0.77}, {0.97}, CalibrationMethod::Midpoint);
    CHECK(mid.threshold == doctest::Approx(0.87).epsilon(1e-12));
    CHECK(mid.youden_j == 1.0);

    const std::vector<double> same{0.5, 0.6, 0.7};
    const auto deg = calibrate_threshold(same, same, CalibrationMethod::Youden);
    CHECK(deg.youden_j == 0.0);
    CHECK(deg.degenerate);

    Rng rng(33);
    std::normal_distribution<double> a(0.4, 0.1), b(1.2, 0.1);
    std::vector<double> sim, dis;
    for (int i = 0; i < 200; ++i) {
        sim.push_back(a(rng));
        dis.push_back(b(rng));
    }
    const auto y = calibrate_threshold(sim, dis, CalibrationMethod::Youden);
    CHECK((y.threshold > 0.4 && y.threshold < 1.2));
    CHECK_FALSE(y.degenerate);
    // exhaustive sweep over every pooled value and midpoint
    std::vector<double> cands = sim;
    cands.insert(cands.end(), dis.begin(), dis.end());
    double best = -2;
    for (double t : cands) {
        for (double u : cands) {
            const double th = 0.5 * (t + u);
            double tp = 0, fp = 0;
            for (double d : sim)
                tp += d < th;
            for (double d : dis)
                fp += d < th;
            best = std::max(best, tp / sim.size() - fp / dis.size());
        }
    }
    CHECK(y.youden_j == doctest::Approx(best).epsilon(1e-12));
    CHECK_THROWS_AS(calibrate_threshold({}, dis, CalibrationMethod::Youden), std::invalid_argument);
}

TEST_CASE("agglomerate examples")
{
    // d(A,B) = 0.1, d(A,C) = d(B,C) = 0.9
    MatrixXd p(3, 2);
    const double h = std::sqrt(0.81 - 0.0025);
    p << 0, 0, 0.1, 0, 0.05, h;
    CHECK(agglomerate(p, {0.82}) == std::vector<int>{0, 0, 1});
    CHECK(agglomerate(MatrixXd::Zero(1, 3), {0.82}) == std::vector<int>{0});
    CHECK(agglomerate(p, {1e9}) == std::vector<int>{0, 0, 0});
    // boundary distance does not merge
    MatrixXd q(2, 1);
    q << 0, 0.82;
    CHECK(agglomerate(q, {0.82}) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(agglomerate(q, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(agglomerate(MatrixXd(0, 2), {1.0}), std::invalid_argument);
}

TEST_CASE("agglomerate equals the exhaustive reference and refines with the threshold")
{
    Rng rng(34);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 12);
        MatrixXd pts(n, 2);
        for (Index i = 0; i < n; ++i)
            pts.row(i) << u(rng), u(rng);
        const double t1 = 0.05 + u(rng), t2 = t1 + u(rng);
        const auto l1 = agglomerate(pts, {t1});
        const auto l2 = agglomerate(pts, {t2});
        CHECK(oracle::partition_of(l1) == oracle::average_linkage(pts, t1));
        CHECK(oracle::refines(l1, l2));
        // labels follow first appearance
        int next = 0;
        for (int l : l1) {
            CHECK(l <= next);
            next = std::max(next, l + 1);
        }
        // permuting the input permutes the partition
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        MatrixXd pp(n, 2);
        for (Index i = 0; i < n; ++i)
            pp.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
        const auto lp = agglomerate(pp, {t1});
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                CHECK((lp[i] == lp[j]) == (l1[perm[i]] == l1[perm[j]]));
    }
}

TEST_CASE("assign_identities")
{
    ProjectorConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 3;
    Projector<double> proj(cfg);
    proj.weight() = MatrixXd::Identity(3, 3);
    FeatureTable ft;
    ft["a"].face = vec({1, 0, 0});
    ft["b"].body = vec({1, 0.05, 0});
    ft["c"].face = vec({0, 0, 1});
    const auto s = seq("q", "S", {{"A", {"a", "b"}}, {"C", {"c"}}});
    const auto labels = assign_identities(s, ft, proj, {0.82});
    CHECK(labels.at("a") == labels.at("b"));
    CHECK(labels.at("a") != labels.at("c"));
    CHECK(assign_identities(s, ft, proj, {0.82}) == labels);
    const auto apart = assign_identities(s, ft, proj, {0.01});
    CHECK(apart.at("a") != apart.at("b"));
    PanelSequence empty = s;
    empty.instances.clear();
    CHECK_THROWS_AS(assign_identities(empty, ft, proj, {0.82}), DataError);
}
