#pragma once

#include "comicreid/evaluation.hpp"
#include "comicreid/projector.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace comicreid {

/// Frozen backbone features of one instance.
struct PartFeatures {
    std::optional<VectorXd> face;
    std::optional<VectorXd> body;
};

using FeatureTable = std::map<std::string, PartFeatures>;

/// Collects backbone-role face/body records. Repeated (uuid, part) entries are a DataError.
FeatureTable features_from_records(const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> records_from_features(const FeatureTable& table);

/// Width shared by every feature in the table; DataError when widths differ or the table is empty.
Index feature_dim(const FeatureTable& table);

/// Batch of the given instances in order, ready for Projector::forward.
PartBatch<double> make_part_batch(const FeatureTable& table, const std::vector<std::string>& uuids);

/// Identity embeddings for the given instances (all instances of the table when uuids is empty).
EmbeddingTable embed_instances(const FeatureTable& table, const Projector<double>& projector,
                               const std::vector<std::string>& uuids = {});

std::vector<EmbeddingRecord> identity_records(const EmbeddingTable& table);
EmbeddingTable identity_table(const std::vector<EmbeddingRecord>& records);

} // namespace comicreid
