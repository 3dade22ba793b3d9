#include "comicreid/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace comicreid {

RetrievalMetrics retrieval_metrics(std::span<const std::uint8_t> relevant, MapAtRMode mode)
{
    std::size_t r = 0;
    for (auto f : relevant)
        r += f != 0;
    if (r == 0)
        throw std::invalid_argument("retrieval metrics need at least one relevant reference");

    RetrievalMetrics m;
    const double R = static_cast<double>(r);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < relevant.size(); ++k) {
        if (!relevant[k])
            continue;
        ++hits;
        const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
        m.ap += precision;
        if (k < r)
            m.ap_at_r += mode == MapAtRMode::Standard ? precision : 1.0;
        if (hits == 1)
            m.rr = 1.0 / static_cast<double>(k + 1);
        if (k < r)
            m.r_precision += 1.0;
    }
    m.ap /= R;
    m.ap_at_r /= R;
    m.r_precision /= R;
    m.p_at_1 = relevant[0] ? 1.0 : 0.0;
    return m;
}

EvalReport aggregate(std::span<const RetrievalMetrics> per_query, const std::string& scope)
{
    EvalReport out;
    out.scope = scope;
    out.queries = per_query.size();
    if (per_query.empty())
        return out;
    for (const auto& m : per_query) {
        out.map += m.ap;
        out.map_at_r += m.ap_at_r;
        out.mrr += m.rr;
        out.p_at_1 += m.p_at_1;
        out.r_precision += m.r_precision;
    }
    const double n = static_cast<double>(per_query.size());
    out.map /= n;
    out.map_at_r /= n;
    out.mrr /= n;
    out.p_at_1 /= n;
    out.r_precision /= n;
    return out;
}

std::string report_csv(const EvalReport& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "scope,map,map_at_r,mrr,p_at_1,r_precision,queries,references,skipped\n"
                                   "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu\n",
                  r.scope.c_str(), r.map, r.map_at_r, r.mrr, r.p_at_1, r.r_precision, r.queries, r.references,
                  r.skipped);
    return buf;
}

std::string report_table(const EvalReport& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-8s %8s %8s %8s %8s %8s\n%-8s %8.2f %8.2f %8.2f %8.2f %8.2f\n"
                  "queries %zu, references %zu, skipped %zu\n",
                  "scope", "MAP", "MAP@R", "MRR", "P@1", "R-P", r.scope.c_str(), 100 * r.map, 100 * r.map_at_r,
                  100 * r.mrr, 100 * r.p_at_1, 100 * r.r_precision, r.queries, r.references, r.skipped);
    return buf;
}

} // namespace comicreid
