// comicreid: command-line driver for the re-identification pipeline.
//
//   synth      synthetic corpus (detections, instances, sequences, features, truth)
//   ingest     detection table -> instances + 4-panel sequences
//   split      series-level train/val/test split
//   pretrain   identity-aware contrastive pretraining, exports backbone features
//   finetune   identity projector training on frozen features
//   evaluate   local or global retrieval metrics
//   assign     per-sequence clustering into identities
//   calibrate  distance threshold from annotated pairs
//   serve      annotation backend
//
// Exit codes: 0 ok, 1 usage or configuration, 2 data, 3 numeric failure.

#include "comicreid/cluster.hpp"
#include "comicreid/codec.hpp"
#include "comicreid/evaluation.hpp"
#include "comicreid/hash.hpp"
#include "comicreid/ingest.hpp"
#include "comicreid/service.hpp"
#include "comicreid/ssl.hpp"
#include "comicreid/synth.hpp"
#include "comicreid/trainer.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

using namespace comicreid;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Level { Quiet, Info, Debug };

Level log_level()
{
    const char* env = std::getenv("COMICREID_LOG_LEVEL");
    const std::string v = env ? env : "info";
    if (v == "quiet")
        return Level::Quiet;
    if (v == "debug")
        return Level::Debug;
    return Level::Info;
}

void info(const std::string& msg)
{
    if (log_level() != Level::Quiet)
        std::cerr << msg << '\n';
}

void debug(const std::string& msg)
{
    if (log_level() == Level::Debug)
        std::cerr << msg << '\n';
}

// Resolved configuration of one run: defaults, then the config file, then --set, then flags.
struct RunConfig {
    Json values;
    std::vector<std::string> sets;
    std::string file;

    void merge(const Json& j, const std::string& origin)
    {
        if (!j.is_object())
            throw UsageError(origin + ": configuration must be a JSON object");
        for (const auto& [k, v] : j.items()) {
            if (!values.contains(k))
                throw UsageError(origin + ": unknown configuration key '" + k + "'");
            values[k] = v;
        }
    }

    void resolve()
    {
        if (!file.empty()) {
            Json j;
            try {
                j = Json::parse(read_text_file(file));
            } catch (const Json::exception& e) {
                throw UsageError("config file " + file + " is not valid JSON: " + e.what());
            }
            merge(j, file);
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0)
                throw UsageError("--set expects key=value, got '" + s + "'");
            const auto key = s.substr(0, eq), raw = s.substr(eq + 1);
            Json v = Json::parse(raw, nullptr, false);
            if (v.is_discarded())
                v = raw;
            merge(Json{{key, v}}, "--set");
        }
    }

    template <typename T>
    void flag(const CLI::Option* opt, const std::string& key, const T& value)
    {
        if (opt->count() > 0)
            values[key] = value;
    }
};

std::string config_hash(const Json& cfg)
{
    return hex64(fnv1a64(cfg.dump()));
}

void write_manifest(const fs::path& dir, const std::string& command, const Json& cfg,
                    const std::vector<std::pair<std::string, fs::path>>& inputs, const std::vector<std::string>& outputs,
                    const std::string& name = "manifest.json")
{
    Json in = Json::array();
    for (const auto& [role, path] : inputs)
        in.push_back(Json{{"role", role}, {"path", path.string()}, {"fnv1a64", hex64(fnv1a64(read_text_file(path)))}});
    Json m{{"command", command},
           {"version", COMICREID_VERSION},
           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION)},
           {"config_hash", config_hash(cfg)},
           {"seed", cfg.contains("seed") ? cfg["seed"] : Json(nullptr)},
           {"config", cfg},
           {"inputs", in},
           {"outputs", outputs}};
    write_text_file(dir / name, m.dump(2) + "\n");
}

void require_file(const fs::path& p, const std::string& what)
{
    if (!fs::is_regular_file(p))
        throw DataError(what + " not found: " + p.string());
}

// ---- subcommand configs ----------------------------------------------------------------

Json synth_defaults()
{
    const SynthConfig c;
    return Json{{"identities", c.identities},         {"series", c.series},
                {"latent_dim", c.latent_dim},         {"feature_dim", c.feature_dim},
                {"style_dim", c.style_dim},           {"panels_per_page", c.panels_per_page},
                {"characters_per_page", c.characters_per_page}, {"sequence_stride", c.sequence_stride},
                {"instance_jitter", c.instance_jitter}, {"feature_noise", c.feature_noise},
                {"style_scale", c.style_scale},       {"face_dropout", c.face_dropout},
                {"body_dropout", c.body_dropout},     {"image_size", c.image_size},
                {"seed", c.seed}};
}

SynthConfig synth_config(const Json& j)
{
    SynthConfig c;
    c.identities = j["identities"];
    c.series = j["series"];
    c.latent_dim = j["latent_dim"];
    c.feature_dim = j["feature_dim"];
    c.style_dim = j["style_dim"];
    c.panels_per_page = j["panels_per_page"];
    c.characters_per_page = j["characters_per_page"];
    c.sequence_stride = j["sequence_stride"];
    c.instance_jitter = j["instance_jitter"];
    c.feature_noise = j["feature_noise"];
    c.style_scale = j["style_scale"];
    c.face_dropout = j["face_dropout"];
    c.body_dropout = j["body_dropout"];
    c.image_size = j["image_size"];
    c.seed = j["seed"];
    c.validate();
    return c;
}

Json ingest_defaults()
{
    const PairingConfig p;
    return Json{{"min_bbox_area", p.min_bbox_area},
                {"min_score", p.min_score},
                {"min_overlap_ratio", p.min_overlap_ratio},
                {"face_scale", p.face_scale},
                {"filter", true},
                {"stride", 4},
                {"seed", 0}};
}

Json split_defaults()
{
    const SplitConfig s;
    return Json{{"sequence_threshold", s.sequence_threshold},
                {"val_fraction", s.val_fraction},
                {"test_fraction", s.test_fraction},
                {"seed", s.seed}};
}

// ---- subcommands -----------------------------------------------------------------------

void cmd_synth(RunConfig& rc, const fs::path& out)
{
    const auto cfg = synth_config(rc.values);
    const auto ds = generate_synthetic(cfg);
    write_synthetic(ds, out);
    std::vector<std::string> outputs{"detections.csv", "instances.jsonl", "sequences.jsonl", "features.jsonl",
                                     "truth.jsonl"};
    if (cfg.image_size > 0)
        outputs.push_back("images.jsonl");
    write_manifest(out, "synth", rc.values, {}, outputs);
    info("synth: " + std::to_string(ds.instances.size()) + " instances in " + std::to_string(ds.sequences.size()) +
         " sequences");
}

void cmd_ingest(RunConfig& rc, const fs::path& detections, const fs::path& out)
{
    require_file(detections, "detection table");
    const Json& j = rc.values;
    PairingConfig pc;
    pc.min_bbox_area = j["min_bbox_area"];
    pc.min_score = j["min_score"];
    pc.min_overlap_ratio = j["min_overlap_ratio"];
    pc.face_scale = j["face_scale"];
    pc.validate();
    auto dets = read_detections(detections);
    const auto before = dets.size();
    if (j["filter"].get<bool>())
        dets = filter_detections(dets, pc);
    Rng rng(j["seed"].get<std::uint64_t>());
    const auto instances = build_instances(dets, pc, rng);
    const auto sequences = build_sequences(instances, j["stride"].get<int>());
    fs::create_directories(out);
    write_instances(instances, out / "instances.jsonl");
    write_sequences(sequences, out / "sequences.jsonl");
    write_manifest(out, "ingest", j, {{"detections", detections}}, {"instances.jsonl", "sequences.jsonl"});
    info("ingest: kept " + std::to_string(dets.size()) + " of " + std::to_string(before) + " detections, " +
         std::to_string(instances.size()) + " instances, " + std::to_string(sequences.size()) + " sequences");
}

void cmd_split(RunConfig& rc, const fs::path& sequences, const fs::path& out)
{
    require_file(sequences, "sequence file");
    const Json& j = rc.values;
    SplitConfig sc;
    sc.sequence_threshold = j["sequence_threshold"];
    sc.val_fraction = j["val_fraction"];
    sc.test_fraction = j["test_fraction"];
    sc.seed = j["seed"];
    const auto res = split_sequences(read_sequences(sequences), sc);
    fs::create_directories(out);
    write_sequences(res.train, out / "train.jsonl");
    write_sequences(res.val, out / "val.jsonl");
    write_sequences(res.test, out / "test.jsonl");
    std::string csv = "series_id,split\n";
    for (const auto& [series, split] : res.series_split)
        csv += series + "," + to_string(split) + "\n";
    write_text_file(out / "split.csv", csv);
    write_manifest(out, "split", j, {{"sequences", sequences}}, {"train.jsonl", "val.jsonl", "test.jsonl", "split.csv"});
    info("split: train " + std::to_string(res.train.size()) + ", val " + std::to_string(res.val.size()) + ", test " +
         std::to_string(res.test.size()) + " sequences");
}

void cmd_pretrain(RunConfig& rc, const fs::path& features, const fs::path& images, const fs::path& out)
{
    const auto cfg = ssl_config_from_json(rc.values);
    std::vector<SslItem> items;
    std::vector<std::pair<std::string, fs::path>> inputs;
    if (cfg.input == SslInput::Features) {
        if (features.empty())
            throw UsageError("pretrain on features needs --features");
        require_file(features, "feature file");
        items = ssl_items_from_features(features_from_records(read_embeddings(features)));
        inputs.emplace_back("features", features);
    } else {
        if (images.empty())
            throw UsageError("pretrain on pixels needs --images");
        require_file(images, "image file");
        std::map<std::string, ImageBuffer> faces, bodies;
        read_images(images, faces, bodies);
        items = ssl_items_from_images(faces, bodies);
        inputs.emplace_back("images", images);
    }
    const auto res = train_ssl(items, cfg);
    const auto stats = ssl_cross_modal_eval(res.model, items, cfg);
    fs::create_directories(out);
    save_ssl_checkpoint(res.model, cfg, out / "ssl_checkpoint.json");
    write_text_file(out / "ssl_log.csv", ssl_log_csv(res.log));
    write_embeddings(records_from_features(ssl_export_features(res.model, items, cfg)), out / "backbone_features.jsonl");
    char buf[256];
    std::snprintf(buf, sizeof buf, "top1,top5,mean_position,evaluated\n%.6f,%.6f,%.6f,%zu\n", stats.top1, stats.top5,
                  stats.mean_position, stats.evaluated);
    write_text_file(out / "cross_modal.csv", buf);
    write_manifest(out, "pretrain", rc.values, inputs,
                   {"ssl_checkpoint.json", "ssl_log.csv", "backbone_features.jsonl", "cross_modal.csv"});
    info("pretrain: cross-modal top-1 " + std::to_string(stats.top1) + " over " + std::to_string(stats.evaluated) +
         " identities");
}

void cmd_finetune(RunConfig& rc, const fs::path& train, const fs::path& val, const fs::path& features,
                  const fs::path& out)
{
    require_file(train, "training sequences");
    require_file(val, "validation sequences");
    require_file(features, "feature file");
    const auto cfg = finetune_config_from_json(rc.values);
    const auto table = features_from_records(read_embeddings(features));
    const auto res = finetune(read_sequences(train), read_sequences(val), table, cfg);
    fs::create_directories(out);
    save_projector(res.projector, out / "projector.json");
    write_text_file(out / "history.csv", finetune_history_csv(res.history));
    write_manifest(out, "finetune", rc.values, {{"train", train}, {"val", val}, {"features", features}},
                   {"projector.json", "history.csv"});
    info("finetune: best epoch " + std::to_string(res.best_epoch) + " of " + std::to_string(res.history.size()));
}

EmbeddingTable load_identity_embeddings(const fs::path& embeddings, const fs::path& features, const fs::path& projector,
                                        std::vector<std::pair<std::string, fs::path>>& inputs)
{
    if (!embeddings.empty()) {
        if (!features.empty() || !projector.empty())
            throw UsageError("give either --embeddings or --features with --projector, not both");
        require_file(embeddings, "embeddings file");
        inputs.emplace_back("embeddings", embeddings);
        return identity_table(read_embeddings(embeddings));
    }
    if (features.empty() || projector.empty())
        throw UsageError("identity embeddings need --embeddings, or --features with --projector");
    require_file(features, "feature file");
    require_file(projector, "projector checkpoint");
    inputs.emplace_back("features", features);
    inputs.emplace_back("projector", projector);
    return embed_instances(features_from_records(read_embeddings(features)), load_projector(projector));
}

void cmd_evaluate(RunConfig& rc, const fs::path& sequences, const fs::path& embeddings, const fs::path& features,
                  const fs::path& projector, const fs::path& out)
{
    require_file(sequences, "sequence file");
    const Json& j = rc.values;
    const auto scope = j["scope"].get<std::string>();
    const auto map_mode = j["map_at_r"].get<std::string>();
    if (scope != "local" && scope != "global")
        throw UsageError("scope must be local or global");
    if (map_mode != "standard" && map_mode != "indicator")
        throw UsageError("map_at_r must be standard or indicator");
    const auto mode = map_mode == "standard" ? MapAtRMode::Standard : MapAtRMode::Indicator;
    std::vector<std::pair<std::string, fs::path>> inputs{{"sequences", sequences}};
    const auto emb = load_identity_embeddings(embeddings, features, projector, inputs);
    const auto seqs = read_sequences(sequences);
    if (seqs.empty())
        throw DataError("no sequences to evaluate in " + sequences.string());

    EvalReport report;
    std::string manifest;
    if (scope == "local") {
        report = local_eval(seqs, emb, mode);
        manifest = "sequence_id,instance_uuid,identity_id\n";
        for (const auto& s : seqs)
            for (const auto& a : s.annotations)
                for (const auto& u : a.member_uuids)
                    manifest += s.sequence_id + "," + u + "," + a.identity_id + "\n";
    } else {
        const auto cur = curate_global(seqs);
        report = global_eval(cur, emb, mode);
        manifest = "role,instance_uuid,label\n";
        for (const auto& q : cur.queries)
            manifest += "query," + q.uuid + "," + q.label + "\n";
        for (const auto& r : cur.references)
            manifest += "reference," + r.uuid + "," + r.label + "\n";
    }
    fs::create_directories(out);
    write_text_file(out / "report.csv", report_csv(report));
    write_text_file(out / "report.txt", report_table(report));
    write_text_file(out / "queries.csv", manifest);
    write_manifest(out, "evaluate", j, inputs, {"report.csv", "report.txt", "queries.csv"});
    std::cout << report_table(report);
}

void cmd_assign(RunConfig& rc, const fs::path& sequences, const fs::path& features, const fs::path& projector,
                const fs::path& out)
{
    require_file(sequences, "sequence file");
    require_file(features, "feature file");
    require_file(projector, "projector checkpoint");
    ClusterConfig cc;
    cc.distance_threshold = rc.values["distance_threshold"];
    const auto table = features_from_records(read_embeddings(features));
    const auto proj = load_projector(projector);
    std::string csv = "sequence_id,instance_uuid,label\n";
    std::size_t n = 0;
    for (const auto& s : read_sequences(sequences)) {
        if (s.instances.empty())
            continue;
        const auto labels = assign_identities(s, table, proj, cc);
        for (const auto& inst : s.instances) {
            csv += s.sequence_id + "," + inst.uuid + "," + std::to_string(labels.at(inst.uuid)) + "\n";
            ++n;
        }
    }
    fs::create_directories(out);
    write_text_file(out / "assignments.csv", csv);
    write_manifest(out, "assign", rc.values, {{"sequences", sequences}, {"features", features}, {"projector", projector}},
                   {"assignments.csv"});
    info("assign: labelled " + std::to_string(n) + " instances");
}

void cmd_calibrate(RunConfig& rc, const fs::path& sequences, const fs::path& embeddings, const fs::path& features,
                   const fs::path& projector, const fs::path& out)
{
    require_file(sequences, "sequence file");
    std::vector<std::pair<std::string, fs::path>> inputs{{"sequences", sequences}};
    const auto emb = load_identity_embeddings(embeddings, features, projector, inputs);
    const auto [sim, dis] = sequence_pair_distances(read_sequences(sequences), emb);
    if (sim.empty() || dis.empty())
        throw DataError("calibration needs both same-identity and different-identity pairs in " + sequences.string());
    const auto method = calibration_method_from_string(rc.values["method"]);
    const auto cal = calibrate_threshold(sim, dis, method, rc.values["min_youden"]);
    const Json result{{"threshold", cal.threshold},
                      {"youden_j", cal.youden_j},
                      {"mean_similar", cal.mean_similar},
                      {"mean_dissimilar", cal.mean_dissimilar},
                      {"degenerate", cal.degenerate},
                      {"similar_pairs", sim.size()},
                      {"dissimilar_pairs", dis.size()}};
    fs::create_directories(out);
    write_text_file(out / "calibration.json", result.dump(2) + "\n");
    write_manifest(out, "calibrate", rc.values, inputs, {"calibration.json"});
    if (cal.degenerate)
        std::cerr << "warning: the distance distributions barely separate (J = " << cal.youden_j << ")\n";
    std::cout << "threshold " << cal.threshold << "\n";
}

int cmd_serve(RunConfig& rc, const fs::path& sequences, const fs::path& state, const fs::path& static_dir,
              const fs::path& features, const fs::path& projector, const fs::path& port_file)
{
    require_file(sequences, "sequence file");
    const Json& j = rc.values;
    ServiceConfig sc;
    sc.sequences = sequences;
    sc.state_dir = state;
    sc.static_dir = static_dir;
    if (!features.empty())
        sc.features = features;
    if (!projector.empty())
        sc.projector = projector;
    sc.cluster.distance_threshold = j["distance_threshold"];
    sc.snapshot_every = j["snapshot_every"];
    sc.page_size = j["page_size"];

    // signals go to a waiter thread; the server threads inherit the blocked mask
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    AnnotatorService svc(sc);
    const int port = svc.bind(j["host"].get<std::string>(), j["port"].get<int>());
    if (port < 0)
        throw DataError("cannot bind " + j["host"].get<std::string>() + ":" + std::to_string(j["port"].get<int>()));
    std::vector<std::pair<std::string, fs::path>> inputs{{"sequences", sequences}};
    if (sc.features) {
        inputs.emplace_back("features", *sc.features);
        inputs.emplace_back("projector", *sc.projector);
    }
    write_manifest(state, "serve", j, inputs, {"events.jsonl", "snapshot.json"}, "serve_manifest.json");
    if (!port_file.empty())
        write_text_file(port_file, std::to_string(port) + "\n");
    info("serve: listening on " + j["host"].get<std::string>() + ":" + std::to_string(port));

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        svc.stop();
    });
    svc.run();
    pthread_kill(waiter.native_handle(), SIGTERM); // no-op when the waiter already returned
    waiter.join();
    info("serve: stopped");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Comic character re-identification pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", COMICREID_VERSION);

    std::string out, detections, sequences, train, val, features, images, embeddings, projector, state, static_dir,
        port_file;
    std::uint64_t seed = 0;

    std::map<std::string, RunConfig> rcs{{"synth", {synth_defaults(), {}, {}}},
                                         {"ingest", {ingest_defaults(), {}, {}}},
                                         {"split", {split_defaults(), {}, {}}},
                                         {"pretrain", {ssl_config_to_json(SslConfig{}), {}, {}}},
                                         {"finetune", {finetune_config_to_json(FinetuneConfig{}), {}, {}}},
                                         {"evaluate", {Json{{"scope", "local"}, {"map_at_r", "standard"}}, {}, {}}},
                                         {"assign", {Json{{"distance_threshold", ClusterConfig{}.distance_threshold}}, {}, {}}},
                                         {"calibrate", {Json{{"method", "youden"}, {"min_youden", 0.1}}, {}, {}}},
                                         {"serve",
                                          {Json{{"host", "127.0.0.1"},
                                                {"port", 8080},
                                                {"distance_threshold", ClusterConfig{}.distance_threshold},
                                                {"snapshot_every", 50},
                                                {"page_size", 50}},
                                           {},
                                           {}}}};
    std::map<std::string, CLI::App*> subs;
    std::map<std::string, CLI::Option*> seed_opts;
    auto sub = [&](const std::string& name, const std::string& help) {
        auto* s = app.add_subcommand(name, help);
        auto& rc = rcs[name];
        s->add_option("--config", rc.file, "JSON configuration file")->check(CLI::ExistingFile);
        s->add_option("--set", rc.sets, "Override one configuration key (key=value)");
        if (rc.values.contains("seed"))
            seed_opts[name] = s->add_option("--seed", seed, "Random seed");
        subs[name] = s;
        return s;
    };

    // synth
    int identities = 0, series = 0, image_size = 0;
    auto* s_synth = sub("synth", "Generate a synthetic corpus");
    s_synth->add_option("--out", out, "Output directory")->required();
    auto* o_ids = s_synth->add_option("--identities", identities, "Number of identities");
    auto* o_series = s_synth->add_option("--series", series, "Number of series");
    auto* o_img = s_synth->add_option("--image-size", image_size, "Render part images of this size (0 = none)");

    // ingest
    double min_score = 0;
    int stride = 0;
    bool no_filter = false;
    auto* s_ingest = sub("ingest", "Build instances and sequences from a detection table");
    s_ingest->add_option("--detections", detections, "Detection CSV")->required();
    s_ingest->add_option("--out", out, "Output directory")->required();
    auto* o_score = s_ingest->add_option("--min-score", min_score, "Detection score floor");
    auto* o_stride = s_ingest->add_option("--stride", stride, "Panel stride between sequences");
    auto* o_nofilter = s_ingest->add_flag("--no-filter", no_filter, "Keep every detection");

    // split
    std::size_t threshold = 0;
    auto* s_split = sub("split", "Series-level train/val/test split");
    s_split->add_option("--sequences", sequences, "Sequence records")->required();
    s_split->add_option("--out", out, "Output directory")->required();
    auto* o_thr = s_split->add_option("--threshold", threshold, "Sequences in the evaluation pool");

    // pretrain
    int steps = 0;
    std::string input;
    bool unaligned = false;
    auto* s_pre = sub("pretrain", "Identity-aware contrastive pretraining");
    s_pre->add_option("--features", features, "Part features (features mode)");
    s_pre->add_option("--images", images, "Part images (pixels mode)");
    s_pre->add_option("--out", out, "Output directory")->required();
    auto* o_steps = s_pre->add_option("--steps", steps, "Optimisation steps");
    auto* o_input = s_pre->add_option("--input", input, "features or pixels");
    auto* o_unal = s_pre->add_flag("--unaligned", unaligned, "Drop the cross face-body term");

    // finetune
    int epochs = 0;
    std::string loss;
    auto* s_ft = sub("finetune", "Train the identity projector");
    s_ft->add_option("--train", train, "Training sequences")->required();
    s_ft->add_option("--val", val, "Validation sequences")->required();
    s_ft->add_option("--features", features, "Backbone part features")->required();
    s_ft->add_option("--out", out, "Output directory")->required();
    auto* o_epochs = s_ft->add_option("--epochs", epochs, "Maximum epochs");
    auto* o_loss = s_ft->add_option("--loss", loss, "contrastive, triplet_margin, multi_similarity, tuplet_plus_intrapair");

    // evaluate
    std::string scope;
    auto* s_eval = sub("evaluate", "Retrieval metrics");
    s_eval->add_option("--sequences", sequences, "Annotated sequences")->required();
    s_eval->add_option("--embeddings", embeddings, "Identity embeddings");
    s_eval->add_option("--features", features, "Backbone part features");
    s_eval->add_option("--projector", projector, "Projector checkpoint");
    s_eval->add_option("--out", out, "Output directory")->required();
    auto* o_scope = s_eval->add_option("--scope", scope, "local or global");

    // assign
    double dist = 0;
    auto* s_assign = sub("assign", "Cluster each sequence into identities");
    s_assign->add_option("--sequences", sequences, "Sequences")->required();
    s_assign->add_option("--features", features, "Backbone part features")->required();
    s_assign->add_option("--projector", projector, "Projector checkpoint")->required();
    s_assign->add_option("--out", out, "Output directory")->required();
    auto* o_dist = s_assign->add_option("--threshold", dist, "Distance threshold");

    // calibrate
    std::string method;
    auto* s_cal = sub("calibrate", "Distance threshold from annotated pairs");
    s_cal->add_option("--sequences", sequences, "Annotated sequences")->required();
    s_cal->add_option("--embeddings", embeddings, "Identity embeddings");
    s_cal->add_option("--features", features, "Backbone part features");
    s_cal->add_option("--projector", projector, "Projector checkpoint");
    s_cal->add_option("--out", out, "Output directory")->required();
    auto* o_method = s_cal->add_option("--method", method, "midpoint or youden");

    // serve
    std::string host;
    int port = 0;
    auto* s_serve = sub("serve", "Annotation backend");
    s_serve->add_option("--sequences", sequences, "Sequences to annotate")->required();
    s_serve->add_option("--state", state, "Event log and snapshot directory")->required();
    s_serve->add_option("--static", static_dir, "Static files served under /static");
    s_serve->add_option("--features", features, "Backbone part features for suggestions");
    s_serve->add_option("--projector", projector, "Projector checkpoint for suggestions");
    s_serve->add_option("--port-file", port_file, "Write the bound port here");
    auto* o_host = s_serve->add_option("--host", host, "Bind address");
    auto* o_port = s_serve->add_option("--port", port, "Port, 0 for any free port");
    auto* o_sdist = s_serve->add_option("--threshold", dist, "Suggestion distance threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    auto& rc = rcs[name];
    try {
        rc.resolve();
        if (const auto it = seed_opts.find(name); it != seed_opts.end())
            rc.flag(it->second, "seed", seed);
        rc.flag(o_ids, "identities", identities);
        rc.flag(o_series, "series", series);
        rc.flag(o_img, "image_size", image_size);
        rc.flag(o_score, "min_score", min_score);
        rc.flag(o_stride, "stride", stride);
        if (no_filter)
            rc.values["filter"] = false;
        (void)o_nofilter;
        rc.flag(o_thr, "sequence_threshold", threshold);
        rc.flag(o_steps, "steps", steps);
        rc.flag(o_input, "input", input);
        if (unaligned)
            rc.values["aligned"] = false;
        (void)o_unal;
        rc.flag(o_epochs, "epochs", epochs);
        rc.flag(o_loss, "loss", loss);
        rc.flag(o_scope, "scope", scope);
        rc.flag(o_dist, "distance_threshold", dist);
        rc.flag(o_method, "method", method);
        rc.flag(o_host, "host", host);
        rc.flag(o_port, "port", port);
        rc.flag(o_sdist, "distance_threshold", dist);
        debug("config " + rc.values.dump());

        if (name == "synth")
            cmd_synth(rc, out);
        else if (name == "ingest")
            cmd_ingest(rc, detections, out);
        else if (name == "split")
            cmd_split(rc, sequences, out);
        else if (name == "pretrain")
            cmd_pretrain(rc, features, images, out);
        else if (name == "finetune")
            cmd_finetune(rc, train, val, features, out);
        else if (name == "evaluate")
            cmd_evaluate(rc, sequences, embeddings, features, projector, out);
        else if (name == "assign")
            cmd_assign(rc, sequences, features, projector, out);
        else if (name == "calibrate")
            cmd_calibrate(rc, sequences, embeddings, features, projector, out);
        else if (name == "serve")
            return cmd_serve(rc, sequences, state, static_dir, features, projector, port_file);
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const Json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    }
}
