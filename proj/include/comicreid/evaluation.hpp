#pragma once

#include "comicreid/linking.hpp"
#include "comicreid/metrics.hpp"
#include "comicreid/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace comicreid {

/// Identity embedding per instance uuid.
using EmbeddingTable = std::map<std::string, VectorXd>;

struct LabeledItem {
    std::string uuid;
    std::string label;
};

/// Relevance flags of `refs` ranked by descending cosine similarity to the query; equal
/// similarities are ordered by uuid. The query itself is never among the candidates.
std::vector<std::uint8_t> ranked_relevance(const LabeledItem& query, const std::vector<LabeledItem>& refs,
                                           const EmbeddingTable& emb);

/// Leave-one-out inside each sequence over its annotated instances; relevance is the same
/// annotated identity. Queries without a positive are skipped and counted.
EvalReport local_eval(const std::vector<PanelSequence>& sequences, const EmbeddingTable& emb,
                      MapAtRMode mode = MapAtRMode::Standard);

struct GlobalCuration {
    std::vector<LabeledItem> queries;
    std::vector<LabeledItem> references;
};

/// Per series, every linked identity with two or more instances gives its smallest uuid as a
/// query and the rest as references; single-instance identities are reference distractors.
/// Labels are series-qualified class ids.
GlobalCuration curate_global(const std::vector<PanelSequence>& sequences);

/// Every query ranks the whole pooled reference set.
EvalReport global_eval(const GlobalCuration& cur, const EmbeddingTable& emb, MapAtRMode mode = MapAtRMode::Standard);

enum class CalibrationMethod { Midpoint, Youden };

struct Calibration {
    double threshold = 0;
    double youden_j = 0; // TPR - FPR at the threshold, predicting "same" when d < threshold
    double mean_similar = 0;
    double mean_dissimilar = 0;
    bool degenerate = false;
};

/// Distance threshold separating same-identity from different-identity pairs. The Youden
/// sweep tries the midpoints between consecutive distinct pooled distances and keeps the first
/// maximum. The result is flagged degenerate when J stays below min_youden.
Calibration calibrate_threshold(const std::vector<double>& similar, const std::vector<double>& dissimilar,
                                CalibrationMethod method, double min_youden = 0.1);

/// Euclidean distances of same-label and different-label pairs inside every sequence.
std::pair<std::vector<double>, std::vector<double>> sequence_pair_distances(
    const std::vector<PanelSequence>& sequences, const EmbeddingTable& emb);

CalibrationMethod calibration_method_from_string(const std::string& s);

} // namespace comicreid
