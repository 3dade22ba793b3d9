#include "comicreid/types.hpp"

#include <cmath>
#include <cstdio>
#include <set>

namespace comicreid {

std::string to_string(PartKind kind)
{
    return kind == PartKind::Face ? "face" : "body";
}

PartKind part_kind_from_string(const std::string& s)
{
    if (s == "face")
        return PartKind::Face;
    if (s == "body")
        return PartKind::Body;
    throw DataError("unknown detection type '" + s + "'");
}

std::string to_string(EmbeddingRole role)
{
    switch (role) {
    case EmbeddingRole::Backbone:
        return "backbone";
    case EmbeddingRole::Projection:
        return "projection";
    case EmbeddingRole::Identity:
        return "identity";
    }
    return "backbone";
}

EmbeddingRole embedding_role_from_string(const std::string& s)
{
    if (s == "backbone")
        return EmbeddingRole::Backbone;
    if (s == "projection")
        return EmbeddingRole::Projection;
    if (s == "identity")
        return EmbeddingRole::Identity;
    throw DataError("unknown embedding role '" + s + "'");
}

std::string to_string(EmbeddingPart part)
{
    switch (part) {
    case EmbeddingPart::Face:
        return "face";
    case EmbeddingPart::Body:
        return "body";
    case EmbeddingPart::Fused:
        return "fused";
    }
    return "fused";
}

EmbeddingPart embedding_part_from_string(const std::string& s)
{
    if (s == "face")
        return EmbeddingPart::Face;
    if (s == "body")
        return EmbeddingPart::Body;
    if (s == "fused")
        return EmbeddingPart::Fused;
    throw DataError("unknown embedding part '" + s + "'");
}

void validate_embedding(const EmbeddingRecord& rec)
{
    if (rec.values.size() == 0)
        throw DataError("embedding " + rec.uuid + " is empty");
    if (!rec.values.allFinite())
        throw DataError("embedding " + rec.uuid + " has non-finite entries");
    if (rec.role == EmbeddingRole::Identity && std::abs(rec.values.norm() - 1.0) > 1e-6)
        throw DataError("identity embedding " + rec.uuid + " is not unit norm");
}

void validate_sequence(const PanelSequence& seq)
{
    if (seq.panels.size() != 4)
        throw DataError("sequence " + seq.sequence_id + " must have exactly 4 panels");
    std::set<std::string> known;
    for (const auto& inst : seq.instances) {
        if (!inst.has_face() && !inst.has_body())
            throw DataError("instance " + inst.uuid + " has neither face nor body");
        if (!known.insert(inst.uuid).second)
            throw DataError("duplicate instance uuid " + inst.uuid + " in sequence " + seq.sequence_id);
    }
    std::set<std::string> ids;
    std::set<std::string> used;
    for (const auto& ann : seq.annotations) {
        if (!ids.insert(ann.identity_id).second)
            throw DataError("duplicate identity id " + ann.identity_id + " in sequence " + seq.sequence_id);
        if (ann.member_uuids.empty())
            throw DataError("identity " + ann.identity_id + " has no members");
        for (const auto& u : ann.member_uuids) {
            if (!known.count(u))
                throw DataError("identity " + ann.identity_id + " references unknown instance " + u);
            if (!used.insert(u).second)
                throw DataError("instance " + u + " belongs to two identities in sequence " + seq.sequence_id);
        }
    }
}

std::string make_uuid(Rng& rng)
{
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    hi = (hi & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;
    lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
    char buf[37];
    std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                  static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                  static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
    return buf;
}

} // namespace comicreid
