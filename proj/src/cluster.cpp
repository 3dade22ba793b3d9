#include "comicreid/cluster.hpp"

#include <limits>

namespace comicreid {

std::vector<int> agglomerate(const MatrixXd& points, const ClusterConfig& cfg)
{
    if (!(cfg.distance_threshold > 0.0))
        throw std::invalid_argument("distance threshold must be positive");
    if (!points.allFinite())
        throw std::invalid_argument("points must be finite");
    const Index n = points.rows();
    if (n == 0)
        throw std::invalid_argument("agglomerate needs at least one point");

    MatrixXd dist(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            dist(i, j) = (points.row(i) - points.row(j)).norm();

    // slot i holds the cluster whose smallest member is i
    std::vector<Index> owner(static_cast<std::size_t>(n));
    std::vector<double> size(static_cast<std::size_t>(n), 1.0);
    std::vector<bool> alive(static_cast<std::size_t>(n), true);
    for (Index i = 0; i < n; ++i)
        owner[static_cast<std::size_t>(i)] = i;

    while (true) {
        double best = std::numeric_limits<double>::infinity();
        Index bi = -1, bj = -1;
        for (Index i = 0; i < n; ++i) {
            if (!alive[static_cast<std::size_t>(i)])
                continue;
            for (Index j = i + 1; j < n; ++j)
                if (alive[static_cast<std::size_t>(j)] && dist(i, j) < best) {
                    best = dist(i, j);
                    bi = i;
                    bj = j;
                }
        }
        if (bi < 0 || !(best < cfg.distance_threshold))
            break;
        // Lance-Williams update for average linkage
        const double si = size[static_cast<std::size_t>(bi)], sj = size[static_cast<std::size_t>(bj)];
        for (Index k = 0; k < n; ++k) {
            if (!alive[static_cast<std::size_t>(k)] || k == bi || k == bj)
                continue;
            const double d = (si * dist(bi, k) + sj * dist(bj, k)) / (si + sj);
            dist(bi, k) = dist(k, bi) = d;
        }
        size[static_cast<std::size_t>(bi)] = si + sj;
        alive[static_cast<std::size_t>(bj)] = false;
        for (auto& o : owner)
            if (o == bj)
                o = bi;
    }

    std::vector<int> labels(static_cast<std::size_t>(n));
    std::map<Index, int> label_of;
    for (Index i = 0; i < n; ++i) {
        const auto root = owner[static_cast<std::size_t>(i)];
        auto [it, fresh] = label_of.emplace(root, static_cast<int>(label_of.size()));
        labels[static_cast<std::size_t>(i)] = it->second;
    }
    return labels;
}

std::map<std::string, int> assign_identities(const PanelSequence& seq, const FeatureTable& features,
                                             const Projector<double>& projector, const ClusterConfig& cfg)
{
    if (seq.instances.empty())
        throw DataError("sequence " + seq.sequence_id + " has no instances");
    std::vector<std::string> uuids;
    for (const auto& inst : seq.instances)
        uuids.push_back(inst.uuid);
    const auto emb = embed_instances(features, projector, uuids);
    MatrixXd pts(static_cast<Index>(uuids.size()), projector.config().output_dim);
    for (std::size_t i = 0; i < uuids.size(); ++i)
        pts.row(static_cast<Index>(i)) = emb.at(uuids[i]).transpose();
    const auto labels = agglomerate(pts, cfg);
    std::map<std::string, int> out;
    for (std::size_t i = 0; i < uuids.size(); ++i)
        out[uuids[i]] = labels[i];
    return out;
}

} // namespace comicreid
