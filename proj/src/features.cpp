#include "comicreid/features.hpp"

namespace comicreid {

FeatureTable features_from_records(const std::vector<EmbeddingRecord>& records)
{
    FeatureTable out;
    for (const auto& r : records) {
        if (r.role != EmbeddingRole::Backbone)
            continue;
        auto& slot = out[r.uuid];
        if (r.part == EmbeddingPart::Fused)
            throw DataError("backbone record for " + r.uuid + " must be a face or body feature");
        auto& target = r.part == EmbeddingPart::Face ? slot.face : slot.body;
        if (target)
            throw DataError("repeated " + to_string(r.part) + " feature for instance " + r.uuid);
        target = r.values;
    }
    return out;
}

std::vector<EmbeddingRecord> records_from_features(const FeatureTable& table)
{
    std::vector<EmbeddingRecord> out;
    for (const auto& [uuid, f] : table) {
        if (f.face)
            out.push_back({uuid, EmbeddingPart::Face, EmbeddingRole::Backbone, *f.face});
        if (f.body)
            out.push_back({uuid, EmbeddingPart::Body, EmbeddingRole::Backbone, *f.body});
    }
    return out;
}

Index feature_dim(const FeatureTable& table)
{
    Index dim = -1;
    for (const auto& [uuid, f] : table)
        for (const auto* v : {&f.face, &f.body})
            if (*v) {
                if (dim >= 0 && (*v)->size() != dim)
                    throw DataError("feature width differs for instance " + uuid);
                dim = (*v)->size();
            }
    if (dim <= 0)
        throw DataError("feature table is empty");
    return dim;
}

PartBatch<double> make_part_batch(const FeatureTable& table, const std::vector<std::string>& uuids)
{
    const Index d = feature_dim(table);
    const auto n = static_cast<Index>(uuids.size());
    PartBatch<double> b;
    b.face = MatrixXd::Zero(n, d);
    b.body = MatrixXd::Zero(n, d);
    for (Index i = 0; i < n; ++i) {
        const auto& uuid = uuids[static_cast<std::size_t>(i)];
        auto it = table.find(uuid);
        if (it == table.end() || (!it->second.face && !it->second.body))
            throw DataError("no backbone features for instance " + uuid);
        if (it->second.face)
            b.face.row(i) = it->second.face->transpose();
        if (it->second.body)
            b.body.row(i) = it->second.body->transpose();
        b.has_face.push_back(it->second.face.has_value());
        b.has_body.push_back(it->second.body.has_value());
    }
    return b;
}

EmbeddingTable embed_instances(const FeatureTable& table, const Projector<double>& projector,
                               const std::vector<std::string>& uuids)
{
    std::vector<std::string> ids = uuids;
    if (ids.empty())
        for (const auto& [uuid, f] : table)
            ids.push_back(uuid);
    EmbeddingTable out;
    if (ids.empty())
        return out;
    const MatrixXd z = projector.forward(make_part_batch(table, ids));
    for (std::size_t i = 0; i < ids.size(); ++i)
        out[ids[i]] = z.row(static_cast<Index>(i)).transpose();
    return out;
}

std::vector<EmbeddingRecord> identity_records(const EmbeddingTable& table)
{
    std::vector<EmbeddingRecord> out;
    for (const auto& [uuid, v] : table)
        out.push_back({uuid, EmbeddingPart::Fused, EmbeddingRole::Identity, v});
    return out;
}

EmbeddingTable identity_table(const std::vector<EmbeddingRecord>& records)
{
    EmbeddingTable out;
    for (const auto& r : records) {
        if (r.role != EmbeddingRole::Identity)
            continue;
        if (!out.emplace(r.uuid, r.values).second)
            throw DataError("repeated identity embedding for instance " + r.uuid);
    }
    return out;
}

} // namespace comicreid
