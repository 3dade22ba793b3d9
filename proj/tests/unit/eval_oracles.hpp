#pragma once

// Reference implementations for the retrieval metrics and average-linkage clustering.

#include "comicreid/metrics.hpp"
#include "comicreid/types.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

inline double precision_at(const std::vector<std::uint8_t>& rel, std::size_t k)
{
    double hits = 0;
    for (std::size_t i = 0; i < k; ++i)
        hits += rel[i];
    return hits / static_cast<double>(k);
}

inline comicreid::RetrievalMetrics metrics(const std::vector<std::uint8_t>& rel)
{
    comicreid::RetrievalMetrics m;
    std::size_t R = 0;
    for (auto f : rel)
        R += f;
    for (std::size_t k = 1; k <= rel.size(); ++k)
        if (rel[k - 1])
            m.ap += precision_at(rel, k);
    m.ap /= static_cast<double>(R);
    for (std::size_t i = 1; i <= R; ++i)
        if (rel[i - 1])
            m.ap_at_r += precision_at(rel, i);
    m.ap_at_r /= static_cast<double>(R);
    for (std::size_t k = 1; k <= rel.size(); ++k)
        if (rel[k - 1]) {
            m.rr = 1.0 / static_cast<double>(k);
            break;
        }
    m.p_at_1 = rel[0];
    m.r_precision = precision_at(rel, R);
    return m;
}

/// Average linkage recomputed from the member lists at every step.
inline std::vector<std::vector<int>> average_linkage(const comicreid::MatrixXd& pts, double threshold)
{
    std::vector<std::vector<int>> clusters;
    for (int i = 0; i < pts.rows(); ++i)
        clusters.push_back({i});
    const auto avg = [&](const std::vector<int>& a, const std::vector<int>& b) {
        double s = 0;
        for (int i : a)
            for (int j : b)
                s += (pts.row(i) - pts.row(j)).norm();
        return s / static_cast<double>(a.size() * b.size());
    };
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double d = avg(clusters[i], clusters[j]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        if (!(best < threshold))
            break;
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<long>(bj));
    }
    for (auto& c : clusters)
        std::sort(c.begin(), c.end());
    std::sort(clusters.begin(), clusters.end());
    return clusters;
}

inline std::vector<std::vector<int>> partition_of(const std::vector<int>& labels)
{
    int k = 0;
    for (int l : labels)
        k = std::max(k, l + 1);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    std::sort(out.begin(), out.end());
    return out;
}

/// True when every block of `fine` lies inside one block of `coarse`.
inline bool refines(const std::vector<int>& fine, const std::vector<int>& coarse)
{
    for (std::size_t i = 0; i < fine.size(); ++i)
        for (std::size_t j = 0; j < fine.size(); ++j)
            if (fine[i] == fine[j] && coarse[i] != coarse[j])
                return false;
    return true;
}

} // namespace oracle
