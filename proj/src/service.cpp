#include "comicreid/service.hpp"

#include "comicreid/hash.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <set>

namespace comicreid {

std::string to_string(AnnotationMode m)
{
    return m == AnnotationMode::SingleCharacter ? "single_character" : "multiple_character";
}

AnnotationMode annotation_mode_from_string(const std::string& s)
{
    if (s == "single_character")
        return AnnotationMode::SingleCharacter;
    if (s == "multiple_character")
        return AnnotationMode::MultipleCharacter;
    throw std::invalid_argument("unknown annotation mode: " + s);
}

namespace {

Json state_to_json(const SequenceState& st)
{
    return Json{{"sequence", to_json(st.sequence)},
                {"mode", to_string(st.mode)},
                {"complete", st.complete},
                {"revision", st.revision},
                {"next_identity", st.next_identity}};
}

SequenceState state_from_json(const Json& j)
{
    SequenceState st;
    st.sequence = sequence_from_json(j.at("sequence"));
    st.mode = annotation_mode_from_string(j.at("mode").get<std::string>());
    st.complete = j.at("complete").get<bool>();
    st.revision = j.at("revision").get<long>();
    st.next_identity = j.at("next_identity").get<long>();
    return st;
}

} // namespace

AnnotationStore::AnnotationStore(std::vector<PanelSequence> dataset, std::filesystem::path state_dir,
                                 std::size_t snapshot_every)
    : state_dir_(std::move(state_dir)), snapshot_every_(std::max<std::size_t>(1, snapshot_every))
{
    for (auto& seq : dataset) {
        SequenceState st;
        st.next_identity = static_cast<long>(seq.annotations.size()) + 1;
        const auto id = seq.sequence_id;
        st.sequence = std::move(seq);
        if (!states_.emplace(id, std::move(st)).second)
            throw DataError("duplicate sequence id " + id);
    }
    std::filesystem::create_directories(state_dir_);
    const auto snap = state_dir_ / "snapshot.json";
    if (std::filesystem::exists(snap)) {
        const Json j = Json::parse(read_text_file(snap));
        event_seq_ = j.at("event_seq").get<long>();
        for (const auto& s : j.at("sequences")) {
            auto st = state_from_json(s);
            states_[st.sequence.sequence_id] = std::move(st);
        }
    }
    const auto log = state_dir_ / "events.jsonl";
    if (std::filesystem::exists(log)) {
        const long base = event_seq_;
        for_each_jsonl(log, [&](const Json& ev) {
            const long seq = ev.at("seq").get<long>();
            if (seq <= base)
                return;
            replay(ev);
            event_seq_ = seq;
            ++since_snapshot_;
        });
    }
}

SequencePage AnnotationStore::page(const std::string& cursor, std::size_t limit) const
{
    std::lock_guard lock(mu_);
    SequencePage out;
    auto it = cursor.empty() ? states_.begin() : states_.upper_bound(cursor);
    for (; it != states_.end() && out.items.size() < limit; ++it)
        out.items.push_back(it->second);
    if (it != states_.end() && !out.items.empty())
        out.next_cursor = out.items.back().sequence.sequence_id;
    return out;
}

std::optional<SequenceState> AnnotationStore::get(const std::string& id) const
{
    std::lock_guard lock(mu_);
    const auto it = states_.find(id);
    if (it == states_.end())
        return std::nullopt;
    return it->second;
}

CommitResult AnnotationStore::apply_commit(SequenceState& st, const CommitRequest& req)
{
    CommitResult res;
    if (req.expected_revision != st.revision) {
        res.status = 409;
        res.revision = st.revision;
        res.message = "revision conflict: expected " + std::to_string(req.expected_revision) + ", current " +
                      std::to_string(st.revision);
        return res;
    }
    std::set<std::string> group(req.uuids.begin(), req.uuids.end());
    std::map<std::string, const CharacterInstance*> known;
    for (const auto& inst : st.sequence.instances)
        known[inst.uuid] = &inst;
    res.status = 422;
    res.revision = st.revision;
    if (group.empty()) {
        res.message = "an identity group needs at least one instance";
        return res;
    }
    for (const auto& u : group)
        if (!known.count(u)) {
            res.message = "unknown instance " + u;
            return res;
        }
    if (req.mode == AnnotationMode::SingleCharacter) {
        std::set<PanelLocator> panels;
        for (const auto& u : group)
            if (!panels.insert(known[u]->panel).second) {
                res.message = "single-character mode allows one instance per panel";
                return res;
            }
    }
    if (!req.reassign)
        for (const auto& a : st.sequence.annotations)
            for (const auto& u : a.member_uuids)
                if (group.count(u)) {
                    res.message = "instance " + u + " already belongs to identity " + a.identity_id;
                    return res;
                }

    auto& anns = st.sequence.annotations;
    for (auto& a : anns)
        std::erase_if(a.member_uuids, [&](const std::string& u) { return group.count(u) > 0; });
    std::erase_if(anns, [](const IdentityAnnotation& a) { return a.member_uuids.empty(); });
    IdentityAnnotation added{"id" + std::to_string(st.next_identity++), {group.begin(), group.end()}};
    anns.push_back(added);
    st.mode = req.mode;
    ++st.revision;
    res.status = 200;
    res.revision = st.revision;
    res.identity_id = added.identity_id;
    return res;
}

CommitResult AnnotationStore::commit(const std::string& id, const CommitRequest& req)
{
    std::lock_guard lock(mu_);
    const auto it = states_.find(id);
    if (it == states_.end())
        return {404, 0, "", "unknown sequence " + id};
    auto res = apply_commit(it->second, req);
    if (res.status == 200)
        append_event({{"type", "commit"},
                      {"sequence_id", id},
                      {"uuids", req.uuids},
                      {"mode", to_string(req.mode)},
                      {"reassign", req.reassign},
                      {"annotator", req.annotator},
                      {"revision", res.revision}});
    return res;
}

CommitResult AnnotationStore::complete(const std::string& id, long expected_revision, const std::string& annotator)
{
    std::lock_guard lock(mu_);
    const auto it = states_.find(id);
    if (it == states_.end())
        return {404, 0, "", "unknown sequence " + id};
    auto& st = it->second;
    if (expected_revision != st.revision)
        return {409, st.revision, "", "revision conflict"};
    st.complete = true;
    ++st.revision;
    append_event({{"type", "complete"}, {"sequence_id", id}, {"annotator", annotator}, {"revision", st.revision}});
    return {200, st.revision, "", ""};
}

void AnnotationStore::replay(const Json& ev)
{
    const auto id = ev.at("sequence_id").get<std::string>();
    const auto it = states_.find(id);
    if (it == states_.end())
        throw DataError("event log refers to unknown sequence " + id);
    auto& st = it->second;
    const long target = ev.at("revision").get<long>();
    if (ev.at("type") == "complete") {
        st.complete = true;
        st.revision = target;
        return;
    }
    CommitRequest req;
    req.uuids = ev.at("uuids").get<std::vector<std::string>>();
    req.mode = annotation_mode_from_string(ev.at("mode").get<std::string>());
    req.reassign = ev.at("reassign").get<bool>();
    req.expected_revision = target - 1;
    if (apply_commit(st, req).status != 200)
        throw DataError("event log does not replay cleanly at " + id + " revision " + std::to_string(target));
}

void AnnotationStore::append_event(const Json& ev_in)
{
    Json ev = ev_in;
    ev["seq"] = ++event_seq_;
    {
        std::ofstream out(state_dir_ / "events.jsonl", std::ios::app);
        out << ev.dump() << '\n';
        if (!out)
            throw DataError("cannot append to the annotation event log in " + state_dir_.string());
    }
    if (++since_snapshot_ >= snapshot_every_)
        write_snapshot();
}

void AnnotationStore::write_snapshot()
{
    Json seqs = Json::array();
    for (const auto& [id, st] : states_)
        if (st.revision > 0)
            seqs.push_back(state_to_json(st));
    const Json snap{{"event_seq", event_seq_}, {"sequences", seqs}};
    const auto tmp = state_dir_ / "snapshot.json.tmp";
    write_text_file(tmp, snap.dump() + "\n");
    std::filesystem::rename(tmp, state_dir_ / "snapshot.json");
    // events up to event_seq_ are in the snapshot; replay skips them even if truncation is lost
    std::ofstream(state_dir_ / "events.jsonl", std::ios::trunc);
    since_snapshot_ = 0;
}

std::string AnnotationStore::export_text() const
{
    std::lock_guard lock(mu_);
    std::vector<PanelSequence> seqs;
    for (const auto& [id, st] : states_)
        seqs.push_back(st.sequence);
    return serialize_sequences(seqs);
}

std::size_t AnnotationStore::size() const
{
    std::lock_guard lock(mu_);
    return states_.size();
}

long AnnotationStore::events() const
{
    std::lock_guard lock(mu_);
    return event_seq_;
}

SuggestionModel load_suggestion_model(const std::filesystem::path& features, const std::filesystem::path& projector,
                                      const ClusterConfig& cluster)
{
    SuggestionModel m;
    m.features = features_from_records(read_embeddings(features));
    m.projector = load_projector(projector);
    m.cluster = cluster;
    std::uint64_t h = fnv1a64(read_text_file(features));
    h = fnv1a64(read_text_file(projector), h);
    h = fnv1a64(std::to_string(cluster.distance_threshold), h);
    m.hash = hex64(h);
    return m;
}

AnnotatorService::AnnotatorService(const ServiceConfig& cfg) : cfg_(cfg), server_(std::make_unique<httplib::Server>())
{
    store_ = std::make_unique<AnnotationStore>(read_sequences(cfg.sequences), cfg.state_dir, cfg.snapshot_every);
    if (cfg.features.has_value() != cfg.projector.has_value())
        throw std::invalid_argument("suggestions need both a features file and a projector checkpoint");
    if (cfg.features)
        model_ = load_suggestion_model(*cfg.features, *cfg.projector, cfg.cluster);
    routes();
}

AnnotatorService::~AnnotatorService()
{
    stop();
}

int AnnotatorService::bind(const std::string& host, int port)
{
    if (port == 0)
        return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

void AnnotatorService::run()
{
    server_->listen_after_bind();
}

void AnnotatorService::stop()
{
    if (server_ && server_->is_running())
        server_->stop();
}

std::optional<std::map<std::string, int>> AnnotatorService::suggestions(const SequenceState& st)
{
    if (!model_)
        return std::nullopt;
    const auto key = std::make_pair(st.sequence.sequence_id, model_->hash);
    {
        std::lock_guard lock(cache_mu_);
        if (const auto it = cache_.find(key); it != cache_.end())
            return it->second;
    }
    auto labels = assign_identities(st.sequence, model_->features, model_->projector, model_->cluster);
    std::lock_guard lock(cache_mu_);
    return cache_.emplace(key, std::move(labels)).first->second;
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message)
{
    send_json(res, status, Json{{"error", message}});
}

Json summary(const SequenceState& st)
{
    return Json{{"sequence_id", st.sequence.sequence_id},
                {"series_id", st.sequence.panels.empty() ? "" : st.sequence.series_id()},
                {"instances", st.sequence.instances.size()},
                {"identities", st.sequence.annotations.size()},
                {"revision", st.revision},
                {"mode", to_string(st.mode)},
                {"complete", st.complete}};
}

} // namespace

void AnnotatorService::routes()
{
    auto& srv = *server_;
    if (!cfg_.static_dir.empty()) {
        if (!srv.set_mount_point("/static", cfg_.static_dir.string()))
            throw DataError("static directory does not exist: " + cfg_.static_dir.string());
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/static/index.html"); });
    }

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, Json{{"status", "ok"}}); });

    srv.Get("/sequences", [this](const httplib::Request& req, httplib::Response& res) {
        std::size_t limit = cfg_.page_size;
        if (req.has_param("limit")) {
            try {
                limit = static_cast<std::size_t>(std::stoul(req.get_param_value("limit")));
            } catch (const std::exception&) {
                return send_error(res, 400, "limit must be a non-negative integer");
            }
        }
        const auto page = store_->page(req.get_param_value("cursor"), std::max<std::size_t>(limit, 1));
        Json items = Json::array();
        for (const auto& st : page.items)
            items.push_back(summary(st));
        Json body{{"items", items}};
        body["next_cursor"] = page.next_cursor ? Json(*page.next_cursor) : Json(nullptr);
        send_json(res, 200, body);
    });

    srv.Get(R"(/sequences/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto st = store_->get(req.matches[1]);
        if (!st)
            return send_error(res, 404, "unknown sequence " + std::string(req.matches[1]));
        Json body = summary(*st);
        Json panels = Json::array();
        for (const auto& p : st->sequence.panels) {
            Json dets = Json::array();
            for (const auto& inst : st->sequence.instances)
                if (inst.panel == p) {
                    if (inst.face)
                        dets.push_back(Json{{"instance_uuid", inst.uuid}, {"detection", to_json(*inst.face)}});
                    if (inst.body)
                        dets.push_back(Json{{"instance_uuid", inst.uuid}, {"detection", to_json(*inst.body)}});
                }
            panels.push_back(Json{{"panel", to_json(p)}, {"detections", dets}});
        }
        body["panels"] = panels;
        Json instances = Json::array();
        for (const auto& inst : st->sequence.instances)
            instances.push_back(to_json(inst));
        body["instance_records"] = instances;
        Json anns = Json::array();
        for (const auto& a : st->sequence.annotations)
            anns.push_back(to_json(a));
        body["annotations"] = anns;
        try {
            if (const auto s = suggestions(*st)) {
                Json sug = Json::object();
                for (const auto& [uuid, label] : *s)
                    sug[uuid] = label;
                body["suggestions"] = sug;
            }
        } catch (const std::exception& e) {
            body["suggestion_error"] = e.what();
        }
        send_json(res, 200, body);
    });

    srv.Post(R"(/sequences/([^/]+)/identities)", [this](const httplib::Request& req, httplib::Response& res) {
        CommitRequest cr;
        try {
            const Json j = Json::parse(req.body);
            cr.uuids = j.at("uuids").get<std::vector<std::string>>();
            cr.mode = annotation_mode_from_string(j.value("mode", std::string("multiple_character")));
            cr.expected_revision = j.at("expected_revision").get<long>();
            cr.reassign = j.value("reassign", false);
        } catch (const std::exception& e) {
            return send_error(res, 400, std::string("malformed identity group: ") + e.what());
        }
        cr.annotator = req.get_header_value("X-Annotator");
        const auto r = store_->commit(req.matches[1], cr);
        if (r.status != 200)
            return send_json(res, r.status, Json{{"error", r.message}, {"revision", r.revision}});
        send_json(res, 200, Json{{"revision", r.revision}, {"identity_id", r.identity_id}});
    });

    srv.Post(R"(/sequences/([^/]+)/complete)", [this](const httplib::Request& req, httplib::Response& res) {
        long expected = 0;
        try {
            expected = Json::parse(req.body).at("expected_revision").get<long>();
        } catch (const std::exception& e) {
            return send_error(res, 400, std::string("malformed request: ") + e.what());
        }
        const auto r = store_->complete(req.matches[1], expected, req.get_header_value("X-Annotator"));
        if (r.status != 200)
            return send_json(res, r.status, Json{{"error", r.message}, {"revision", r.revision}});
        send_json(res, 200, Json{{"revision", r.revision}});
    });

    srv.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(store_->export_text(), "application/x-ndjson");
    });
}

} // namespace comicreid
