#pragma once

#include "comicreid/types.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace comicreid {

struct IdentityRef {
    std::string sequence_id;
    std::string identity_id;

    friend auto operator<=>(const IdentityRef&, const IdentityRef&) = default;
};

/// One positive class after linking: every annotated identity that transitively shares an
/// instance uuid with another ends up in the same class.
struct IdentityClass {
    std::string series_id;
    std::vector<IdentityRef> members;
    std::vector<std::string> instance_uuids; // sorted, unique
};

/// Nodes are linked identity classes; an undirected edge means two classes were annotated as
/// different characters inside at least one sequence.
class IdentityGraph {
public:
    IdentityGraph() = default;
    IdentityGraph(std::vector<IdentityClass> nodes, std::set<std::pair<std::size_t, std::size_t>> edges);

    std::size_t size() const { return nodes_.size(); }
    const IdentityClass& node(std::size_t i) const { return nodes_.at(i); }
    const std::vector<IdentityClass>& nodes() const { return nodes_; }
    const std::set<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

    bool dissimilar(std::size_t a, std::size_t b) const;
    const std::vector<std::size_t>& neighbours(std::size_t a) const { return adjacency_.at(a); }

    /// Class of an instance uuid, or npos when the instance is not annotated.
    std::size_t class_of(const std::string& uuid) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// Subgraph over `keep` (indices into this graph), preserving the given order.
    IdentityGraph induced(const std::vector<std::size_t>& keep) const;

private:
    std::vector<IdentityClass> nodes_;
    std::set<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> adjacency_;
    std::map<std::string, std::size_t> class_of_instance_;
};

/// Disjoint-set forest with path halving and union by size.
class UnionFind {
public:
    explicit UnionFind(std::size_t n);
    std::size_t find(std::size_t x);
    bool unite(std::size_t a, std::size_t b);

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

/// Merges annotated identities across sequences that share an instance uuid and inherits the
/// within-sequence dissimilarity edges onto the merged classes. Classes are ordered by their
/// smallest instance uuid. Throws DataError when two identities of the same sequence collapse
/// into one class.
IdentityGraph link_sequences(const std::vector<PanelSequence>& sequences);

/// Rewrites each sequence's identity ids to the linked class ids ("c<index>").
std::vector<PanelSequence> relabel_with_classes(const std::vector<PanelSequence>& sequences,
                                                const IdentityGraph& graph);

} // namespace comicreid
