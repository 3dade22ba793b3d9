#include "comicreid/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace comicreid {

namespace {

const VectorXd& lookup(const EmbeddingTable& emb, const std::string& uuid)
{
    auto it = emb.find(uuid);
    if (it == emb.end())
        throw DataError("no embedding for instance " + uuid);
    return it->second;
}

double cosine(const VectorXd& a, const VectorXd& b)
{
    if (a.size() != b.size())
        throw DataError("embedding dimensions differ");
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0) || !(nb > 0))
        throw DataError("zero embedding cannot be ranked");
    return a.dot(b) / (na * nb);
}

double mean(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

std::vector<std::uint8_t> ranked_relevance(const LabeledItem& query, const std::vector<LabeledItem>& refs,
                                           const EmbeddingTable& emb)
{
    const auto& q = lookup(emb, query.uuid);
    std::vector<std::pair<double, const LabeledItem*>> scored;
    scored.reserve(refs.size());
    for (const auto& r : refs)
        if (r.uuid != query.uuid)
            scored.emplace_back(cosine(q, lookup(emb, r.uuid)), &r);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first)
            return a.first > b.first;
        return a.second->uuid < b.second->uuid;
    });
    std::vector<std::uint8_t> rel;
    rel.reserve(scored.size());
    for (const auto& [s, r] : scored)
        rel.push_back(r->label == query.label);
    return rel;
}

EvalReport local_eval(const std::vector<PanelSequence>& sequences, const EmbeddingTable& emb, MapAtRMode mode)
{
    std::vector<RetrievalMetrics> per_query;
    std::size_t skipped = 0, references = 0;
    std::vector<const PanelSequence*> ordered;
    for (const auto& seq : sequences)
        ordered.push_back(&seq);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto* a, const auto* b) { return a->sequence_id < b->sequence_id; });
    for (const auto* sp : ordered) {
        const auto& seq = *sp;
        std::vector<LabeledItem> items;
        for (const auto& ann : seq.annotations)
            for (const auto& u : ann.member_uuids)
                items.push_back({u, ann.identity_id});
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.uuid < b.uuid; });
        if (items.size() < 2)
            continue;
        references += items.size();
        for (const auto& q : items) {
            const auto rel = ranked_relevance(q, items, emb);
            if (std::none_of(rel.begin(), rel.end(), [](auto f) { return f != 0; })) {
                ++skipped;
                continue;
            }
            per_query.push_back(retrieval_metrics(rel, mode));
        }
    }
    if (per_query.empty())
        throw DataError("local evaluation found no query with a positive");
    auto report = aggregate(per_query, "local");
    report.references = references;
    report.skipped = skipped;
    return report;
}

GlobalCuration curate_global(const std::vector<PanelSequence>& sequences)
{
    if (sequences.empty())
        throw DataError("global curation needs a non-empty test split");
    const auto graph = link_sequences(sequences);
    GlobalCuration cur;
    for (std::size_t c = 0; c < graph.size(); ++c) {
        const auto& cls = graph.node(c);
        const std::string label = cls.series_id + "/c" + std::to_string(c);
        const auto& uu = cls.instance_uuids; // sorted
        if (uu.size() >= 2) {
            cur.queries.push_back({uu.front(), label});
            for (std::size_t k = 1; k < uu.size(); ++k)
                cur.references.push_back({uu[k], label});
        } else {
            cur.references.push_back({uu.front(), label});
        }
    }
    const auto by_uuid = [](const LabeledItem& a, const LabeledItem& b) { return a.uuid < b.uuid; };
    std::sort(cur.queries.begin(), cur.queries.end(), by_uuid);
    std::sort(cur.references.begin(), cur.references.end(), by_uuid);
    return cur;
}

EvalReport global_eval(const GlobalCuration& cur, const EmbeddingTable& emb, MapAtRMode mode)
{
    std::vector<RetrievalMetrics> per_query;
    std::size_t skipped = 0;
    for (const auto& q : cur.queries) {
        const auto rel = ranked_relevance(q, cur.references, emb);
        if (std::none_of(rel.begin(), rel.end(), [](auto f) { return f != 0; })) {
            ++skipped;
            continue;
        }
        per_query.push_back(retrieval_metrics(rel, mode));
    }
    if (per_query.empty())
        throw DataError("global evaluation found no query with a positive");
    auto report = aggregate(per_query, "global");
    report.references = cur.references.size();
    report.skipped = skipped;
    return report;
}

Calibration calibrate_threshold(const std::vector<double>& similar, const std::vector<double>& dissimilar,
                                CalibrationMethod method, double min_youden)
{
    if (similar.empty() || dissimilar.empty())
        throw std::invalid_argument("calibration needs both similar and dissimilar distances");
    Calibration c;
    c.mean_similar = mean(similar);
    c.mean_dissimilar = mean(dissimilar);
    const auto youden = [&](double t) {
        const auto below = [t](const std::vector<double>& v) {
            return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double d) { return d < t; })) /
                   static_cast<double>(v.size());
        };
        return below(similar) - below(dissimilar);
    };
    if (method == CalibrationMethod::Midpoint) {
        c.threshold = 0.5 * (c.mean_similar + c.mean_dissimilar);
        c.youden_j = youden(c.threshold);
    } else {
        std::vector<double> pooled(similar);
        pooled.insert(pooled.end(), dissimilar.begin(), dissimilar.end());
        std::sort(pooled.begin(), pooled.end());
        pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
        c.threshold = pooled.front();
        c.youden_j = youden(c.threshold);
        for (std::size_t k = 0; k + 1 < pooled.size(); ++k) {
            const double t = 0.5 * (pooled[k] + pooled[k + 1]);
            const double j = youden(t);
            if (j > c.youden_j) {
                c.youden_j = j;
                c.threshold = t;
            }
        }
    }
    c.degenerate = c.youden_j < min_youden;
    return c;
}

std::pair<std::vector<double>, std::vector<double>> sequence_pair_distances(
    const std::vector<PanelSequence>& sequences, const EmbeddingTable& emb)
{
    std::vector<double> same, diff;
    for (const auto& seq : sequences) {
        std::vector<LabeledItem> items;
        for (const auto& ann : seq.annotations)
            for (const auto& u : ann.member_uuids)
                items.push_back({u, ann.identity_id});
        for (std::size_t a = 0; a < items.size(); ++a)
            for (std::size_t b = a + 1; b < items.size(); ++b) {
                const double d = (lookup(emb, items[a].uuid) - lookup(emb, items[b].uuid)).norm();
                (items[a].label == items[b].label ? same : diff).push_back(d);
            }
    }
    return {same, diff};
}

CalibrationMethod calibration_method_from_string(const std::string& s)
{
    if (s == "midpoint")
        return CalibrationMethod::Midpoint;
    if (s == "youden")
        return CalibrationMethod::Youden;
    throw std::invalid_argument("unknown calibration method: " + s);
}

} // namespace comicreid
