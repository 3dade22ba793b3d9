#pragma once

// Pair miners. The base miner selects informative pairs from a candidate set; the meta-miner
// builds candidate sets whose negatives are backed by annotated dissimilarity.

#include "comicreid/linking.hpp"
#include "comicreid/losses.hpp"

#include <limits>
#include <set>
#include <string>
#include <vector>

namespace comicreid {

enum class BaseMiner { None, MultiSimilarity };

struct MinerConfig {
    BaseMiner base = BaseMiner::MultiSimilarity;
    double epsilon = 0.1;
    bool meta_mining = true;
    bool mix_series = false;
    /// Group each identity with its direct dissimilarity neighbours instead of maximal cliques.
    /// Neighbours of one node need not be dissimilar to each other, so this mode can emit
    /// negatives without an annotation behind them.
    bool neighbourhood = false;
};

std::string to_string(BaseMiner b);
BaseMiner base_miner_from_string(const std::string& s);

/// Multi-similarity mining over candidate pairs, cosine similarity. Per anchor a:
/// a negative n is kept when S(a,n) > min_p S(a,p) - eps, a positive p when
/// S(a,p) < max_n S(a,n) + eps. An anchor without candidate positives keeps no negatives and
/// vice versa.
template <typename Scalar>
PairSets multi_similarity_miner(const Matrix<Scalar>& emb, const PairSets& candidates, Scalar epsilon)
{
    if (!(epsilon > Scalar(0)))
        throw std::invalid_argument("multi-similarity miner epsilon must be positive");
    const Index m = emb.rows();
    const Matrix<Scalar> unit = normalize_rows(emb).unit;
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    std::vector<Scalar> min_pos(static_cast<std::size_t>(m), inf), max_neg(static_cast<std::size_t>(m), -inf);
    const auto sim = [&](const IndexPair& p) {
        detail::check_rows(emb, p.a, p.b);
        return unit.row(p.a).dot(unit.row(p.b));
    };
    for (const auto& p : candidates.positive)
        min_pos[static_cast<std::size_t>(p.a)] = std::min(min_pos[static_cast<std::size_t>(p.a)], sim(p));
    for (const auto& p : candidates.negative)
        max_neg[static_cast<std::size_t>(p.a)] = std::max(max_neg[static_cast<std::size_t>(p.a)], sim(p));

    PairSets out;
    for (const auto& p : candidates.negative)
        if (sim(p) > min_pos[static_cast<std::size_t>(p.a)] - epsilon)
            out.negative.push_back(p);
    for (const auto& p : candidates.positive)
        if (sim(p) < max_neg[static_cast<std::size_t>(p.a)] + epsilon)
            out.positive.push_back(p);
    return out;
}

template <typename Scalar>
PairSets multi_similarity_miner(const Matrix<Scalar>& emb, std::span<const int> labels, Scalar epsilon)
{
    if (static_cast<Index>(labels.size()) != emb.rows())
        throw std::invalid_argument("one label per embedding row is required");
    return multi_similarity_miner(emb, all_pairs(labels), epsilon);
}

/// All maximal cliques of an undirected graph given by adjacency lists (Bron-Kerbosch with
/// pivoting). Every clique is sorted; the list is sorted lexicographically. Isolated vertices
/// are singleton cliques.
std::vector<std::vector<std::size_t>> maximal_cliques(const std::vector<std::vector<std::size_t>>& adjacency);

/// Mining groups over the graph: maximal cliques, or closed neighbourhoods in neighbourhood mode.
std::vector<std::vector<std::size_t>> mining_groups(const IdentityGraph& graph, bool neighbourhood);

/// Where a batch row comes from: its linked identity class (graph node) and its series.
struct BatchItem {
    std::size_t node = IdentityGraph::npos;
    std::string series_id;
};

/// One mining group resolved onto batch rows: candidate pairs and the rows taking part.
struct MiningGroup {
    std::vector<std::size_t> clique; // graph nodes
    std::vector<Index> members;      // rows whose node is in the clique
    std::vector<Index> mixed;        // mix-series rows
    PairSets candidates;
};

/// Candidate pairs per group. Inside a group, rows of one node are positives and rows of two
/// different nodes are negatives (those nodes are annotated dissimilar). With mix_series, rows
/// from series that no group member belongs to join as singleton classes; their only pairs are
/// negatives against group members.
std::vector<MiningGroup> meta_mining_groups(const IdentityGraph& graph, std::span<const BatchItem> batch,
                                            const MinerConfig& cfg);

/// Runs the base miner per group and merges the result over the batch (deduplicated, sorted).
/// Without meta-mining the candidates are all pairs labelled by graph node.
template <typename Scalar>
PairSets meta_mine(const Matrix<Scalar>& emb, const IdentityGraph& graph, std::span<const BatchItem> batch,
                   const MinerConfig& cfg)
{
    if (static_cast<Index>(batch.size()) != emb.rows())
        throw std::invalid_argument("one batch item per embedding row is required");
    const auto run_base = [&](const PairSets& cand) {
        return cfg.base == BaseMiner::MultiSimilarity
                   ? multi_similarity_miner(emb, cand, static_cast<Scalar>(cfg.epsilon))
                   : cand;
    };
    if (!cfg.meta_mining) {
        std::vector<int> labels;
        for (const auto& b : batch)
            labels.push_back(static_cast<int>(b.node));
        return run_base(all_pairs(labels));
    }
    std::set<IndexPair> pos, neg;
    for (const auto& g : meta_mining_groups(graph, batch, cfg)) {
        const auto mined = run_base(g.candidates);
        pos.insert(mined.positive.begin(), mined.positive.end());
        neg.insert(mined.negative.begin(), mined.negative.end());
    }
    return {{pos.begin(), pos.end()}, {neg.begin(), neg.end()}};
}

} // namespace comicreid
