#include "comicreid/codec.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace comicreid {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ','))
        out.push_back(trim(field));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out)
{
    if (s.empty())
        return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if constexpr (std::is_floating_point_v<T>) {
        // libstdc++ 11 lacks floating from_chars in some configurations; strtod is fine here.
        char* end = nullptr;
        out = static_cast<T>(std::strtod(first, &end));
        return end == last;
    } else {
        auto [ptr, ec] = std::from_chars(first, last, out);
        return ec == std::errc() && ptr == last;
    }
}

std::string page_column(const PanelLocator& p)
{
    return p.panel_id.empty() ? p.page_id : p.page_id + "_" + p.panel_id;
}

} // namespace

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
    if (!out)
        throw DataError("write failed for " + path.string());
}

std::vector<Detection> parse_detections(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kDetectionHeader)
        throw DataError("line 1: header does not match '" + std::string(kDetectionHeader) + "'");

    std::vector<Detection> dets;
    std::vector<std::string> errors;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        const auto f = split_csv(line);
        const auto fail = [&](const std::string& what) {
            errors.push_back("line " + std::to_string(lineno) + ": " + what);
        };
        if (f.size() != 10) {
            fail("expected 10 fields, got " + std::to_string(f.size()));
            continue;
        }
        Detection d;
        if (!f[0].empty() && !parse_number(f[0], d.char_index)) {
            fail("char_index is not an integer");
            continue;
        }
        if (f[1] != "face" && f[1] != "body") {
            fail("type must be face or body");
            continue;
        }
        d.kind = part_kind_from_string(f[1]);
        if (!parse_number(f[2], d.index)) {
            fail("index is not an integer");
            continue;
        }
        if (!parse_number(f[3], d.bbox.x0) || !parse_number(f[4], d.bbox.y0) || !parse_number(f[5], d.bbox.x1) ||
            !parse_number(f[6], d.bbox.y1)) {
            fail("non-numeric coordinate");
            continue;
        }
        if (!parse_number(f[7], d.bbox.score)) {
            fail("non-numeric score");
            continue;
        }
        if (!d.bbox.valid()) {
            fail("invalid box (need x0<x1, y0<y1, score in [0,1])");
            continue;
        }
        d.panel.series_id = f[8];
        const auto us = f[9].find('_');
        if (us == std::string::npos) {
            d.panel.page_id = f[9];
        } else {
            d.panel.page_id = f[9].substr(0, us);
            d.panel.panel_id = f[9].substr(us + 1);
        }
        dets.push_back(std::move(d));
    }
    if (!errors.empty()) {
        std::string msg = "malformed detection rows:";
        for (const auto& e : errors)
            msg += "\n  " + e;
        throw DataError(msg);
    }
    return dets;
}

std::vector<Detection> read_detections(const std::filesystem::path& path)
{
    try {
        return parse_detections(read_text_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_detections(const std::vector<Detection>& dets, const std::filesystem::path& path)
{
    std::ostringstream out;
    out << kDetectionHeader << '\n';
    for (const auto& d : dets) {
        char score[32];
        std::snprintf(score, sizeof score, "%.17g", d.bbox.score);
        if (d.char_index >= 0)
            out << d.char_index;
        out << ',' << to_string(d.kind) << ',' << d.index << ',' << d.bbox.x0 << ',' << d.bbox.y0 << ','
            << d.bbox.x1 << ',' << d.bbox.y1 << ',' << score << ',' << d.panel.series_id << ','
            << page_column(d.panel) << '\n';
    }
    write_text_file(path, out.str());
}

Json to_json(const BBox& b)
{
    return Json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}, {"score", b.score}};
}

Json to_json(const PanelLocator& p)
{
    return Json{{"series_id", p.series_id}, {"page_id", p.page_id}, {"panel_id", p.panel_id}};
}

Json to_json(const Detection& d)
{
    Json j{{"kind", to_string(d.kind)}, {"index", d.index}, {"bbox", to_json(d.bbox)}, {"panel", to_json(d.panel)}};
    if (d.char_index >= 0)
        j["char_index"] = d.char_index;
    return j;
}

Json to_json(const CharacterInstance& inst)
{
    Json j{{"uuid", inst.uuid}, {"char_index", inst.char_index}, {"panel", to_json(inst.panel)}};
    if (inst.face)
        j["face"] = to_json(*inst.face);
    if (inst.body)
        j["body"] = to_json(*inst.body);
    return j;
}

Json to_json(const IdentityAnnotation& a)
{
    return Json{{"identity_id", a.identity_id}, {"members", a.member_uuids}};
}

Json to_json(const PanelSequence& seq)
{
    Json panels = Json::array();
    for (const auto& p : seq.panels)
        panels.push_back(to_json(p));
    Json instances = Json::array();
    for (const auto& i : seq.instances)
        instances.push_back(to_json(i));
    Json anns = Json::array();
    for (const auto& a : seq.annotations)
        anns.push_back(to_json(a));
    return Json{{"sequence_id", seq.sequence_id}, {"panels", panels}, {"instances", instances}, {"annotations", anns}};
}

Json to_json(const EmbeddingRecord& e)
{
    std::vector<double> v(e.values.data(), e.values.data() + e.values.size());
    return Json{{"uuid", e.uuid}, {"part", to_string(e.part)}, {"role", to_string(e.role)},
                {"dim", e.values.size()}, {"values", v}};
}

BBox bbox_from_json(const Json& j)
{
    BBox b{j.at("x0").get<std::int64_t>(), j.at("y0").get<std::int64_t>(), j.at("x1").get<std::int64_t>(),
           j.at("y1").get<std::int64_t>(), j.at("score").get<double>()};
    if (!b.valid())
        throw DataError("invalid bbox");
    return b;
}

PanelLocator panel_from_json(const Json& j)
{
    return PanelLocator{j.at("series_id").get<std::string>(), j.at("page_id").get<std::string>(),
                        j.value("panel_id", std::string{})};
}

Detection detection_from_json(const Json& j)
{
    Detection d;
    d.kind = part_kind_from_string(j.at("kind").get<std::string>());
    d.index = j.at("index").get<int>();
    d.bbox = bbox_from_json(j.at("bbox"));
    d.panel = panel_from_json(j.at("panel"));
    d.char_index = j.value("char_index", -1);
    return d;
}

CharacterInstance instance_from_json(const Json& j)
{
    CharacterInstance inst;
    inst.uuid = j.at("uuid").get<std::string>();
    inst.char_index = j.at("char_index").get<int>();
    inst.panel = panel_from_json(j.at("panel"));
    if (j.contains("face"))
        inst.face = detection_from_json(j.at("face"));
    if (j.contains("body"))
        inst.body = detection_from_json(j.at("body"));
    if (!inst.face && !inst.body)
        throw DataError("instance " + inst.uuid + " has neither face nor body");
    return inst;
}

IdentityAnnotation annotation_from_json(const Json& j)
{
    return IdentityAnnotation{j.at("identity_id").get<std::string>(),
                              j.at("members").get<std::vector<std::string>>()};
}

PanelSequence sequence_from_json(const Json& j)
{
    PanelSequence seq;
    seq.sequence_id = j.at("sequence_id").get<std::string>();
    for (const auto& p : j.at("panels"))
        seq.panels.push_back(panel_from_json(p));
    for (const auto& i : j.at("instances"))
        seq.instances.push_back(instance_from_json(i));
    for (const auto& a : j.value("annotations", Json::array()))
        seq.annotations.push_back(annotation_from_json(a));
    validate_sequence(seq);
    return seq;
}

EmbeddingRecord embedding_from_json(const Json& j)
{
    EmbeddingRecord e;
    e.uuid = j.at("uuid").get<std::string>();
    e.part = embedding_part_from_string(j.at("part").get<std::string>());
    e.role = embedding_role_from_string(j.at("role").get<std::string>());
    const auto v = j.at("values").get<std::vector<double>>();
    if (j.contains("dim") && j.at("dim").get<std::size_t>() != v.size())
        throw DataError("embedding " + e.uuid + " dim does not match its values");
    e.values = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    validate_embedding(e);
    return e;
}

void write_instances(const std::vector<CharacterInstance>& instances, const std::filesystem::path& path)
{
    std::string out;
    for (const auto& i : instances)
        out += to_json(i).dump() + "\n";
    write_text_file(path, out);
}

std::vector<CharacterInstance> read_instances(const std::filesystem::path& path)
{
    std::vector<CharacterInstance> out;
    std::set<std::string> seen;
    for_each_jsonl(path, [&](const Json& j) {
        auto inst = instance_from_json(j);
        if (!seen.insert(inst.uuid).second)
            throw DataError("duplicate instance uuid " + inst.uuid);
        out.push_back(std::move(inst));
    });
    return out;
}

std::string serialize_sequences(const std::vector<PanelSequence>& seqs)
{
    std::string out;
    for (const auto& s : seqs)
        out += to_json(s).dump() + "\n";
    return out;
}

std::vector<PanelSequence> parse_sequences(const std::string& text)
{
    std::vector<PanelSequence> out;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            auto seq = sequence_from_json(Json::parse(line));
            if (!seen.insert(seq.sequence_id).second)
                throw DataError("duplicate sequence id " + seq.sequence_id);
            out.push_back(std::move(seq));
        } catch (const Json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_sequences(const std::vector<PanelSequence>& seqs, const std::filesystem::path& path)
{
    write_text_file(path, serialize_sequences(seqs));
}

std::vector<PanelSequence> read_sequences(const std::filesystem::path& path)
{
    try {
        return parse_sequences(read_text_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_embeddings(const std::vector<EmbeddingRecord>& embs, const std::filesystem::path& path)
{
    std::string out;
    for (const auto& e : embs)
        out += to_json(e).dump() + "\n";
    write_text_file(path, out);
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path)
{
    std::vector<EmbeddingRecord> out;
    std::set<std::pair<std::string, std::string>> seen;
    for_each_jsonl(path, [&](const Json& j) {
        auto e = embedding_from_json(j);
        if (!seen.emplace(e.uuid, to_string(e.part)).second)
            throw DataError("duplicate embedding for " + e.uuid + "/" + to_string(e.part));
        out.push_back(std::move(e));
    });
    return out;
}

} // namespace comicreid
