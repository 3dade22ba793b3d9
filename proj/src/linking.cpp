#include "comicreid/linking.hpp"

#include <algorithm>
#include <numeric>

namespace comicreid {

UnionFind::UnionFind(std::size_t n) : parent_(n), size_(n, 1)
{
    std::iota(parent_.begin(), parent_.end(), 0);
}

std::size_t UnionFind::find(std::size_t x)
{
    while (parent_[x] != x) {
        parent_[x] = parent_[parent_[x]];
        x = parent_[x];
    }
    return x;
}

bool UnionFind::unite(std::size_t a, std::size_t b)
{
    a = find(a);
    b = find(b);
    if (a == b)
        return false;
    if (size_[a] < size_[b])
        std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
}

IdentityGraph::IdentityGraph(std::vector<IdentityClass> nodes, std::set<std::pair<std::size_t, std::size_t>> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), adjacency_(nodes_.size())
{
    for (const auto& [a, b] : edges_) {
        if (a == b || a >= nodes_.size() || b >= nodes_.size() || a > b)
            throw DataError("identity graph edges must be ordered pairs of distinct nodes");
        adjacency_[a].push_back(b);
        adjacency_[b].push_back(a);
    }
    for (auto& adj : adjacency_)
        std::sort(adj.begin(), adj.end());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        for (const auto& u : nodes_[i].instance_uuids)
            class_of_instance_[u] = i;
}

bool IdentityGraph::dissimilar(std::size_t a, std::size_t b) const
{
    if (a > b)
        std::swap(a, b);
    return edges_.count({a, b}) > 0;
}

std::size_t IdentityGraph::class_of(const std::string& uuid) const
{
    auto it = class_of_instance_.find(uuid);
    return it == class_of_instance_.end() ? npos : it->second;
}

IdentityGraph IdentityGraph::induced(const std::vector<std::size_t>& keep) const
{
    std::vector<IdentityClass> nodes;
    std::map<std::size_t, std::size_t> remap;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        nodes.push_back(nodes_.at(keep[i]));
        remap[keep[i]] = i;
    }
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& [a, b] : edges_) {
        auto ia = remap.find(a);
        auto ib = remap.find(b);
        if (ia != remap.end() && ib != remap.end())
            edges.insert(std::minmax(ia->second, ib->second));
    }
    return IdentityGraph(std::move(nodes), std::move(edges));
}

IdentityGraph link_sequences(const std::vector<PanelSequence>& sequences)
{
    std::vector<IdentityRef> refs;
    std::vector<std::string> ref_series;
    std::map<std::string, std::vector<std::size_t>> holders; // uuid -> identity refs containing it
    for (const auto& seq : sequences) {
        for (const auto& ann : seq.annotations) {
            const std::size_t r = refs.size();
            refs.push_back({seq.sequence_id, ann.identity_id});
            ref_series.push_back(seq.panels.empty() ? std::string{} : seq.series_id());
            for (const auto& u : ann.member_uuids)
                holders[u].push_back(r);
        }
    }

    UnionFind uf(refs.size());
    for (const auto& [uuid, rs] : holders)
        for (std::size_t k = 1; k < rs.size(); ++k)
            uf.unite(rs[0], rs[k]);

    // Gather classes keyed by root, then order them by smallest instance uuid.
    std::map<std::size_t, IdentityClass> by_root;
    for (std::size_t r = 0; r < refs.size(); ++r) {
        auto& cls = by_root[uf.find(r)];
        cls.members.push_back(refs[r]);
        if (cls.series_id.empty())
            cls.series_id = ref_series[r];
    }
    for (const auto& [uuid, rs] : holders)
        by_root[uf.find(rs[0])].instance_uuids.push_back(uuid);

    std::vector<std::pair<std::size_t, IdentityClass>> ordered(by_root.begin(), by_root.end());
    for (auto& [root, cls] : ordered) {
        std::sort(cls.instance_uuids.begin(), cls.instance_uuids.end());
        std::sort(cls.members.begin(), cls.members.end());
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.second.instance_uuids.front() < b.second.instance_uuids.front();
    });
    std::map<std::size_t, std::size_t> root_to_class;
    std::vector<IdentityClass> nodes;
    for (auto& [root, cls] : ordered) {
        root_to_class[root] = nodes.size();
        nodes.push_back(std::move(cls));
    }

    std::set<std::pair<std::size_t, std::size_t>> edges;
    std::size_t r = 0;
    for (const auto& seq : sequences) {
        const std::size_t first = r;
        r += seq.annotations.size();
        for (std::size_t a = first; a < r; ++a) {
            for (std::size_t b = a + 1; b < r; ++b) {
                const auto ca = root_to_class.at(uf.find(a));
                const auto cb = root_to_class.at(uf.find(b));
                if (ca == cb)
                    throw DataError("sequence " + seq.sequence_id + ": identities " + refs[a].identity_id +
                                    " and " + refs[b].identity_id +
                                    " are annotated as different but linking merges them");
                edges.insert(std::minmax(ca, cb));
            }
        }
    }
    return IdentityGraph(std::move(nodes), std::move(edges));
}

std::vector<PanelSequence> relabel_with_classes(const std::vector<PanelSequence>& sequences,
                                                const IdentityGraph& graph)
{
    std::vector<PanelSequence> out = sequences;
    for (auto& seq : out) {
        for (auto& ann : seq.annotations) {
            const auto cls = graph.class_of(ann.member_uuids.front());
            if (cls == IdentityGraph::npos)
                throw DataError("instance " + ann.member_uuids.front() + " is not in the identity graph");
            ann.identity_id = "c" + std::to_string(cls);
        }
    }
    return out;
}

} // namespace comicreid
