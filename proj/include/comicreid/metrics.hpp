#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace comicreid {

struct RetrievalMetrics {
    double ap = 0;
    double ap_at_r = 0;
    double rr = 0;
    double p_at_1 = 0;
    double r_precision = 0;
};

/// Standard: P(i) in AP@R is precision@i when rank i is relevant, else 0.
/// Indicator: P(i) is 1 when rank i is relevant, else 0.
enum class MapAtRMode { Standard, Indicator };

/// Metrics for one query from the relevance flags of its ranked references (best first).
/// R is the number of relevant flags and must be positive.
RetrievalMetrics retrieval_metrics(std::span<const std::uint8_t> relevant, MapAtRMode mode = MapAtRMode::Standard);

struct EvalReport {
    std::string scope;
    double map = 0;
    double map_at_r = 0;
    double mrr = 0;
    double p_at_1 = 0;
    double r_precision = 0;
    std::size_t queries = 0;
    std::size_t references = 0;
    std::size_t skipped = 0; // queries without a relevant reference
};

/// Unweighted mean over queries.
EvalReport aggregate(std::span<const RetrievalMetrics> per_query, const std::string& scope);

std::string report_csv(const EvalReport& r);
std::string report_table(const EvalReport& r);

} // namespace comicreid
