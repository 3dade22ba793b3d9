#pragma once

// Metric-learning losses over a batch of embeddings (one per row). Every loss returns its
// value and the gradient w.r.t. the rows. Distance-based losses use the Euclidean distance of
// the given rows; similarity-based losses use cosine similarity and normalise internally.

#include "comicreid/similarity.hpp"

#include <algorithm>
#include <numbers>
#include <span>
#include <vector>

namespace comicreid {

/// Ordered index pair (anchor, other).
struct IndexPair {
    Index a = 0;
    Index b = 0;
    friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

/// y = 0 for similar pairs and 1 for dissimilar pairs.
struct LabeledPair {
    Index a = 0;
    Index b = 0;
    int y = 0;
};

struct Triplet {
    Index a = 0;
    Index p = 0;
    Index n = 0;
    friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct PairSets {
    std::vector<IndexPair> positive;
    std::vector<IndexPair> negative;
};

/// Every ordered pair (a, b), a != b, split by label equality.
inline PairSets all_pairs(std::span<const int> labels)
{
    PairSets out;
    const auto n = static_cast<Index>(labels.size());
    for (Index a = 0; a < n; ++a)
        for (Index b = 0; b < n; ++b)
            if (a != b)
                (labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(b)] ? out.positive
                                                                                               : out.negative)
                    .push_back({a, b});
    return out;
}

/// Triplets (a, p, n) for every positive and negative pair sharing the anchor.
inline std::vector<Triplet> pairs_to_triplets(const PairSets& pairs)
{
    std::vector<Triplet> out;
    for (const auto& p : pairs.positive)
        for (const auto& n : pairs.negative)
            if (p.a == n.a)
                out.push_back({p.a, p.b, n.b});
    return out;
}

namespace detail {

template <typename Scalar>
void check_rows(const Matrix<Scalar>& emb, Index a, Index b)
{
    if (a < 0 || b < 0 || a >= emb.rows() || b >= emb.rows())
        throw std::invalid_argument("pair index out of range");
}

/// Scatters a similarity gradient dS(a,b) onto normalised rows.
template <typename Scalar>
void add_similarity_grad(Matrix<Scalar>& dunit, const Matrix<Scalar>& unit, Index a, Index b, Scalar g)
{
    dunit.row(a) += g * unit.row(b);
    dunit.row(b) += g * unit.row(a);
}

} // namespace detail

/// Mean over pairs of (1 - y) * d^2 / 2 + y * max(0, margin - d)^2 / 2.
template <typename Scalar>
LossResult<Scalar> contrastive_loss(const Matrix<Scalar>& emb, std::span<const LabeledPair> pairs, Scalar margin)
{
    if (pairs.empty())
        throw std::invalid_argument("contrastive loss needs at least one pair");
    if (margin < Scalar(0))
        throw std::invalid_argument("margin must be non-negative");
    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>::Zero(emb.rows(), emb.cols())};
    const Scalar inv = Scalar(1) / static_cast<Scalar>(pairs.size());
    for (const auto& pr : pairs) {
        detail::check_rows(emb, pr.a, pr.b);
        const Vector<Scalar> diff = (emb.row(pr.a) - emb.row(pr.b)).transpose();
        const Scalar d = diff.norm();
        if (pr.y == 0) {
            res.value += Scalar(0.5) * d * d;
            res.grad.row(pr.a) += inv * diff.transpose();
            res.grad.row(pr.b) -= inv * diff.transpose();
        } else {
            const Scalar hinge = std::max(Scalar(0), margin - d);
            res.value += Scalar(0.5) * hinge * hinge;
            if (hinge > Scalar(0) && d > Scalar(0)) {
                const Vector<Scalar> g = (-hinge / d) * diff;
                res.grad.row(pr.a) += inv * g.transpose();
                res.grad.row(pr.b) -= inv * g.transpose();
            }
        }
    }
    res.value *= inv;
    return res;
}

/// Mean over triplets of max(0, d(a,p) - d(a,n) + margin).
template <typename Scalar>
LossResult<Scalar> triplet_margin_loss(const Matrix<Scalar>& emb, std::span<const Triplet> triplets,
                                       Scalar margin = Scalar(0.2))
{
    if (triplets.empty())
        throw std::invalid_argument("triplet loss needs at least one triplet");
    if (margin < Scalar(0))
        throw std::invalid_argument("margin must be non-negative");
    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>::Zero(emb.rows(), emb.cols())};
    const Scalar inv = Scalar(1) / static_cast<Scalar>(triplets.size());
    for (const auto& t : triplets) {
        detail::check_rows(emb, t.a, t.p);
        detail::check_rows(emb, t.a, t.n);
        const Vector<Scalar> dp_vec = (emb.row(t.a) - emb.row(t.p)).transpose();
        const Vector<Scalar> dn_vec = (emb.row(t.a) - emb.row(t.n)).transpose();
        const Scalar dp = dp_vec.norm();
        const Scalar dn = dn_vec.norm();
        const Scalar v = dp - dn + margin;
        if (v <= Scalar(0))
            continue;
        res.value += v;
        if (dp > Scalar(0)) {
            const Vector<Scalar> g = (inv / dp) * dp_vec;
            res.grad.row(t.a) += g.transpose();
            res.grad.row(t.p) -= g.transpose();
        }
        if (dn > Scalar(0)) {
            const Vector<Scalar> g = (inv / dn) * dn_vec;
            res.grad.row(t.a) -= g.transpose();
            res.grad.row(t.n) += g.transpose();
        }
    }
    res.value *= inv;
    return res;
}

struct MultiSimilarityParams {
    double alpha = 2.0;
    double beta = 50.0;
    double base = 0.5;
};

/// Multi-similarity loss: (1/m) sum_i [ (1/alpha) log(1 + sum_{P_i} e^{-alpha (S_ik - base)})
///                                     + (1/beta)  log(1 + sum_{N_i} e^{ beta (S_ik - base)}) ]
/// where P_i / N_i are the positive / negative pairs anchored at i and m is the batch size.
/// Anchors without any pair contribute zero.
template <typename Scalar>
LossResult<Scalar> multi_similarity_loss(const Matrix<Scalar>& emb, const PairSets& pairs,
                                         const MultiSimilarityParams& p = {})
{
    if (!(p.alpha > 0.0) || !(p.beta > 0.0))
        throw std::invalid_argument("alpha and beta must be positive");
    const Index m = emb.rows();
    if (m == 0)
        throw std::invalid_argument("multi-similarity loss needs a non-empty batch");
    const auto fwd = normalize_rows(emb);
    const Scalar alpha = static_cast<Scalar>(p.alpha), beta = static_cast<Scalar>(p.beta),
                 base = static_cast<Scalar>(p.base);

    std::vector<std::vector<Index>> pos(static_cast<std::size_t>(m)), neg(static_cast<std::size_t>(m));
    for (const auto& pr : pairs.positive) {
        detail::check_rows(emb, pr.a, pr.b);
        pos[static_cast<std::size_t>(pr.a)].push_back(pr.b);
    }
    for (const auto& pr : pairs.negative) {
        detail::check_rows(emb, pr.a, pr.b);
        neg[static_cast<std::size_t>(pr.a)].push_back(pr.b);
    }

    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>()};
    Matrix<Scalar> dunit = Matrix<Scalar>::Zero(m, emb.cols());
    const Scalar inv_m = Scalar(1) / Scalar(m);
    const auto term = [&](Index i, const std::vector<Index>& others, Scalar sign, Scalar scale) {
        if (others.empty())
            return;
        Vector<Scalar> x(static_cast<Index>(others.size()));
        for (std::size_t k = 0; k < others.size(); ++k)
            x(static_cast<Index>(k)) = sign * scale * (fwd.unit.row(i).dot(fwd.unit.row(others[k])) - base);
        const Scalar lse = masked_logsumexp<Scalar>(x, [](Index) { return true; }, true);
        res.value += inv_m * lse / scale;
        for (std::size_t k = 0; k < others.size(); ++k) {
            const Scalar w = std::exp(x(static_cast<Index>(k)) - lse);
            detail::add_similarity_grad(dunit, fwd.unit, i, others[k], inv_m * sign * w);
        }
    };
    for (Index i = 0; i < m; ++i) {
        term(i, pos[static_cast<std::size_t>(i)], Scalar(-1), alpha);
        term(i, neg[static_cast<std::size_t>(i)], Scalar(1), beta);
    }
    res.grad = normalize_rows_backward(fwd, dunit);
    return res;
}

struct TupletMarginParams {
    double margin_degrees = 5.73;
    double scale = 64.0;
};

/// Tuplet-margin loss: for every positive pair (a, p) with angle theta_ap,
///   log(1 + sum_{(a, n) negative} exp(scale * (cos theta_an - cos(theta_ap - margin))))
/// averaged over positive pairs.
template <typename Scalar>
LossResult<Scalar> tuplet_margin_loss(const Matrix<Scalar>& emb, const PairSets& pairs,
                                      const TupletMarginParams& p = {})
{
    if (pairs.positive.empty())
        throw std::invalid_argument("tuplet-margin loss needs at least one positive pair");
    const auto fwd = normalize_rows(emb);
    const Scalar margin = static_cast<Scalar>(p.margin_degrees * std::numbers::pi / 180.0);
    const Scalar scale = static_cast<Scalar>(p.scale);
    const Scalar clamp = Scalar(1) - Scalar(1e-7);

    std::vector<std::vector<Index>> neg(static_cast<std::size_t>(emb.rows()));
    for (const auto& pr : pairs.negative) {
        detail::check_rows(emb, pr.a, pr.b);
        neg[static_cast<std::size_t>(pr.a)].push_back(pr.b);
    }
    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>()};
    Matrix<Scalar> dunit = Matrix<Scalar>::Zero(emb.rows(), emb.cols());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(pairs.positive.size());
    for (const auto& pp : pairs.positive) {
        detail::check_rows(emb, pp.a, pp.b);
        const auto& negs = neg[static_cast<std::size_t>(pp.a)];
        if (negs.empty())
            continue;
        const Scalar s_raw = fwd.unit.row(pp.a).dot(fwd.unit.row(pp.b));
        const Scalar s = std::clamp(s_raw, -clamp, clamp);
        const Scalar theta = std::acos(s);
        const Scalar pos_cos = std::cos(theta - margin);
        const Scalar dpos_cos = (s_raw == s) ? std::sin(theta - margin) / std::sqrt(Scalar(1) - s * s) : Scalar(0);

        Vector<Scalar> x(static_cast<Index>(negs.size()));
        for (std::size_t k = 0; k < negs.size(); ++k)
            x(static_cast<Index>(k)) = scale * (fwd.unit.row(pp.a).dot(fwd.unit.row(negs[k])) - pos_cos);
        const Scalar lse = masked_logsumexp<Scalar>(x, [](Index) { return true; }, true);
        res.value += inv * lse;
        Scalar wsum = 0;
        for (std::size_t k = 0; k < negs.size(); ++k) {
            const Scalar w = std::exp(x(static_cast<Index>(k)) - lse);
            wsum += w;
            detail::add_similarity_grad(dunit, fwd.unit, pp.a, negs[k], inv * scale * w);
        }
        detail::add_similarity_grad(dunit, fwd.unit, pp.a, pp.b, -inv * scale * wsum * dpos_cos);
    }
    res.grad = normalize_rows_backward(fwd, dunit);
    return res;
}

struct IntraPairVarianceParams {
    double pos_eps = 0.01;
    double neg_eps = 0.01;
};

/// Intra-pair variance loss on cosine similarities:
///   mean_P relu((1 - pos_eps) * mean(S_P) - S_ap)^2 + mean_N relu(S_an - (1 + neg_eps) * mean(S_N))^2
/// The batch means are part of the graph.
template <typename Scalar>
LossResult<Scalar> intra_pair_variance_loss(const Matrix<Scalar>& emb, const PairSets& pairs,
                                            const IntraPairVarianceParams& p = {})
{
    if (pairs.positive.empty() && pairs.negative.empty())
        throw std::invalid_argument("intra-pair variance loss needs at least one pair");
    const auto fwd = normalize_rows(emb);
    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>()};
    Matrix<Scalar> dunit = Matrix<Scalar>::Zero(emb.rows(), emb.cols());

    const auto side = [&](const std::vector<IndexPair>& prs, Scalar eps, bool positive) {
        if (prs.empty())
            return;
        const Scalar count = static_cast<Scalar>(prs.size());
        Vector<Scalar> s(static_cast<Index>(prs.size()));
        for (std::size_t k = 0; k < prs.size(); ++k) {
            detail::check_rows(emb, prs[k].a, prs[k].b);
            s(static_cast<Index>(k)) = fwd.unit.row(prs[k].a).dot(fwd.unit.row(prs[k].b));
        }
        const Scalar mean = s.mean();
        Vector<Scalar> r(s.size());
        for (Index k = 0; k < s.size(); ++k) {
            const Scalar v = positive ? (Scalar(1) - eps) * mean - s(k) : s(k) - (Scalar(1) + eps) * mean;
            r(k) = std::max(Scalar(0), v);
        }
        res.value += r.squaredNorm() / count;
        const Scalar rsum = r.sum();
        for (Index k = 0; k < s.size(); ++k) {
            const Scalar g = positive ? Scalar(2) / count * ((Scalar(1) - eps) / count * rsum - r(k))
                                      : Scalar(2) / count * (r(k) - (Scalar(1) + eps) / count * rsum);
            const auto& pr = prs[static_cast<std::size_t>(k)];
            detail::add_similarity_grad(dunit, fwd.unit, pr.a, pr.b, g);
        }
    };
    side(pairs.positive, static_cast<Scalar>(p.pos_eps), true);
    side(pairs.negative, static_cast<Scalar>(p.neg_eps), false);
    res.grad = normalize_rows_backward(fwd, dunit);
    return res;
}

/// weight_tuplet * tuplet-margin + weight_ipv * intra-pair variance (defaults 1 and 0.5).
template <typename Scalar>
LossResult<Scalar> tuplet_plus_intrapair_loss(const Matrix<Scalar>& emb, const PairSets& pairs,
                                              Scalar weight_tuplet = Scalar(1), Scalar weight_ipv = Scalar(0.5),
                                              const TupletMarginParams& tp = {},
                                              const IntraPairVarianceParams& ip = {})
{
    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>::Zero(emb.rows(), emb.cols())};
    if (weight_tuplet != Scalar(0)) {
        const auto a = tuplet_margin_loss(emb, pairs, tp);
        res.value += weight_tuplet * a.value;
        res.grad += weight_tuplet * a.grad;
    }
    if (weight_ipv != Scalar(0)) {
        const auto b = intra_pair_variance_loss(emb, pairs, ip);
        res.value += weight_ipv * b.value;
        res.grad += weight_ipv * b.grad;
    }
    return res;
}

} // namespace comicreid
