#include "comicreid/codec.hpp"
#include "comicreid/linking.hpp"
#include "comicreid/mlp.hpp"
#include "comicreid/synth.hpp"

#include "loss_oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace comicreid;

TEST_CASE("mlp gradients match finite differences")
{
    Rng rng(21);
    for (bool relu_last : {false, true}) {
        Mlp<double> net({5, 7, 3}, relu_last);
        net.initialize(rng);
        Vector<double> p = net.parameters();
        std::normal_distribution<double> nd;
        for (Index i = 0; i < p.size(); ++i)
            p(i) += 0.1 * nd(rng); // biases away from zero keep ReLU kinks out of the way
        net.set_parameters(p);
        MatrixXd x(4, 5), w(4, 3);
        for (Index i = 0; i < x.size(); ++i)
            x.data()[i] = nd(rng);
        for (Index i = 0; i < w.size(); ++i)
            w.data()[i] = nd(rng);

        Mlp<double>::Cache cache;
        const MatrixXd y = net.forward(x, &cache);
        const auto g = net.backward(cache, w);

        auto loss_of_params = [&](const Vector<double>& q) {
            Mlp<double> n2 = net;
            n2.set_parameters(q);
            return (n2.forward(x).array() * w.array()).sum();
        };
        const VectorXd num = oracle::numeric_grad(loss_of_params, VectorXd(p));
        CHECK(oracle::grad_rel_err(g.params, num) < 1e-6);

        auto loss_of_input = [&](const VectorXd& flat) {
            MatrixXd xi = Eigen::Map<const MatrixXd>(flat.data(), 4, 5);
            return (net.forward(xi).array() * w.array()).sum();
        };
        const VectorXd flat = Eigen::Map<const VectorXd>(x.data(), x.size());
        const VectorXd num_in = oracle::numeric_grad(loss_of_input, flat);
        CHECK(oracle::grad_rel_err(Eigen::Map<const VectorXd>(g.input.data(), g.input.size()), num_in) < 1e-6);
        if (relu_last)
            CHECK(y.minCoeff() >= 0.0);
    }
}

TEST_CASE("mlp parameter round trip and shape checks")
{
    Rng rng(22);
    Mlp<double> net({3, 4, 2});
    net.initialize(rng);
    CHECK(net.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
    Mlp<double> other({3, 4, 2});
    other.set_parameters(net.parameters());
    MatrixXd x = MatrixXd::Random(3, 3);
    CHECK((net.forward(x) - other.forward(x)).norm() == 0.0);
    CHECK_THROWS(net.forward(MatrixXd::Zero(2, 4)));
    CHECK_THROWS(net.set_parameters(VectorXd::Zero(5)));
    CHECK_THROWS(Mlp<double>({3}));
}

TEST_CASE("synthetic corpus is deterministic and links one class per identity")
{
    SynthConfig cfg;
    cfg.identities = 12;
    cfg.series = 3;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(serialize_sequences(a.sequences) == serialize_sequences(b.sequences));
    REQUIRE(a.features.size() == a.instances.size());

    std::set<std::string> identities;
    for (const auto& [uuid, who] : a.identity_of)
        identities.insert(who);
    CHECK(identities.size() == 12);

    const auto graph = link_sequences(a.sequences);
    CHECK(graph.size() == 12);
    for (const auto& node : graph.nodes()) {
        std::set<std::string> who;
        for (const auto& uuid : node.instance_uuids)
            who.insert(a.identity_of.at(uuid));
        CHECK(who.size() == 1);
    }
    for (const auto& [uuid, part] : a.features)
        CHECK((part.face.has_value() || part.body.has_value()));

    cfg.seed = 8;
    CHECK(serialize_sequences(generate_synthetic(cfg).sequences) != serialize_sequences(a.sequences));
}

TEST_CASE("synthetic corpus writes its files")
{
    SynthConfig cfg;
    cfg.identities = 4;
    cfg.series = 2;
    cfg.image_size = 6;
    const auto ds = generate_synthetic(cfg);
    testsupport::TempDir dir("synth");
    write_synthetic(ds, dir.path());
    for (const char* name : {"detections.csv", "instances.jsonl", "sequences.jsonl", "features.jsonl", "truth.jsonl", "images.jsonl"})
        CHECK(std::filesystem::exists(dir / name));
    CHECK(read_truth(dir / "truth.jsonl") == ds.identity_of);
    CHECK(read_sequences(dir / "sequences.jsonl").size() == ds.sequences.size());
    std::map<std::string, ImageBuffer> faces, bodies;
    read_images(dir / "images.jsonl", faces, bodies);
    CHECK(faces.size() == ds.face_images.size());
    CHECK(bodies.size() == ds.body_images.size());
    CHECK(faces.begin()->second.data == ds.face_images.begin()->second.data);

    SynthConfig bad;
    bad.series = 30;
    CHECK_THROWS(generate_synthetic(bad));
}
