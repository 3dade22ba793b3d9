#include "comicreid/mining.hpp"

#include <algorithm>
#include <map>

namespace comicreid {

std::string to_string(BaseMiner b)
{
    return b == BaseMiner::None ? "none" : "multi_similarity";
}

BaseMiner base_miner_from_string(const std::string& s)
{
    if (s == "none")
        return BaseMiner::None;
    if (s == "multi_similarity")
        return BaseMiner::MultiSimilarity;
    throw std::invalid_argument("unknown base miner: " + s);
}

namespace {

using NodeSet = std::vector<std::size_t>; // sorted

NodeSet intersect(const NodeSet& a, const NodeSet& b)
{
    NodeSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

NodeSet subtract(const NodeSet& a, const NodeSet& b)
{
    NodeSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

void bron_kerbosch(const std::vector<NodeSet>& adj, NodeSet& r, NodeSet p, NodeSet x, std::vector<NodeSet>& out)
{
    if (p.empty() && x.empty()) {
        NodeSet c = r;
        std::sort(c.begin(), c.end());
        out.push_back(std::move(c));
        return;
    }
    // pivot: vertex of P u X with the most neighbours in P
    std::size_t pivot = p.empty() ? x.front() : p.front();
    std::size_t best = 0;
    for (const auto* s : {&p, &x})
        for (auto u : *s) {
            const auto k = intersect(adj[u], p).size();
            if (k > best) {
                best = k;
                pivot = u;
            }
        }
    for (auto v : subtract(p, adj[pivot])) {
        r.push_back(v);
        bron_kerbosch(adj, r, intersect(p, adj[v]), intersect(x, adj[v]), out);
        r.pop_back();
        p.erase(std::find(p.begin(), p.end(), v));
        x.insert(std::upper_bound(x.begin(), x.end(), v), v);
    }
}

} // namespace

std::vector<std::vector<std::size_t>> maximal_cliques(const std::vector<std::vector<std::size_t>>& adjacency)
{
    std::vector<NodeSet> adj(adjacency.size());
    for (std::size_t v = 0; v < adjacency.size(); ++v) {
        for (auto u : adjacency[v]) {
            if (u >= adjacency.size())
                throw std::invalid_argument("adjacency references an unknown vertex");
            if (u != v)
                adj[v].push_back(u);
        }
        std::sort(adj[v].begin(), adj[v].end());
        adj[v].erase(std::unique(adj[v].begin(), adj[v].end()), adj[v].end());
    }
    NodeSet all(adjacency.size());
    for (std::size_t v = 0; v < all.size(); ++v)
        all[v] = v;
    std::vector<NodeSet> out;
    NodeSet r;
    bron_kerbosch(adj, r, all, {}, out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<std::size_t>> mining_groups(const IdentityGraph& graph, bool neighbourhood)
{
    if (graph.size() == 0)
        throw std::invalid_argument("mining needs a non-empty identity graph");
    std::vector<NodeSet> adj(graph.size());
    for (std::size_t v = 0; v < graph.size(); ++v)
        adj[v] = graph.neighbours(v);
    if (!neighbourhood)
        return maximal_cliques(adj);
    std::vector<NodeSet> out;
    for (std::size_t v = 0; v < graph.size(); ++v) {
        NodeSet g = adj[v];
        g.insert(std::upper_bound(g.begin(), g.end(), v), v);
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<MiningGroup> meta_mining_groups(const IdentityGraph& graph, std::span<const BatchItem> batch,
                                            const MinerConfig& cfg)
{
    // restrict the graph to nodes present in the batch
    std::map<std::size_t, std::vector<Index>> rows_of;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto node = batch[i].node;
        if (node == IdentityGraph::npos)
            continue;
        if (node >= graph.size())
            throw std::invalid_argument("batch item refers to an unknown identity node");
        rows_of[node].push_back(static_cast<Index>(i));
    }
    if (rows_of.empty())
        return {};
    std::vector<std::size_t> present;
    for (const auto& [node, rows] : rows_of)
        present.push_back(node);
    const auto sub = graph.induced(present);

    std::vector<MiningGroup> out;
    for (const auto& local : mining_groups(sub, cfg.neighbourhood)) {
        MiningGroup g;
        std::set<std::string> series;
        std::map<Index, std::size_t> node_of_row;
        for (auto l : local) {
            const auto node = present[l];
            g.clique.push_back(node);
            series.insert(graph.node(node).series_id);
            for (auto r : rows_of[node]) {
                g.members.push_back(r);
                node_of_row[r] = node;
            }
        }
        std::sort(g.members.begin(), g.members.end());
        for (auto a : g.members)
            for (auto b : g.members)
                if (a != b)
                    (node_of_row[a] == node_of_row[b] ? g.candidates.positive : g.candidates.negative)
                        .push_back({a, b});
        if (cfg.mix_series) {
            for (std::size_t i = 0; i < batch.size(); ++i)
                if (!series.count(batch[i].series_id))
                    g.mixed.push_back(static_cast<Index>(i));
            for (auto a : g.members)
                for (auto x : g.mixed) {
                    g.candidates.negative.push_back({a, x});
                    g.candidates.negative.push_back({x, a});
                }
        }
        out.push_back(std::move(g));
    }
    return out;
}

} // namespace comicreid
