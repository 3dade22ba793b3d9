#pragma once

#include "comicreid/features.hpp"

#include <map>
#include <string>
#include <vector>

namespace comicreid {

struct ClusterConfig {
    double distance_threshold = 0.82;
};

/// Average-linkage agglomerative clustering with Euclidean distances. The closest pair of
/// clusters merges while its average distance is strictly below the threshold; ties go to the
/// smallest (cluster, other cluster) pair, clusters being indexed by their first member.
/// Labels number clusters in order of first member appearance.
std::vector<int> agglomerate(const MatrixXd& points, const ClusterConfig& cfg);

/// Clusters the identity embeddings of every instance of the sequence.
std::map<std::string, int> assign_identities(const PanelSequence& seq, const FeatureTable& features,
                                             const Projector<double>& projector, const ClusterConfig& cfg);

} // namespace comicreid
