#pragma once

// NT-Xent and the identity-aware sum of face, body and face-body terms, plus in-batch retrieval
// statistics over projections.

#include "comicreid/similarity.hpp"

#include <span>
#include <vector>

namespace comicreid {

/// Positive map for two stacked views of n items: i <-> i + n.
inline std::vector<Index> two_view_positives(Index n)
{
    std::vector<Index> pos(static_cast<std::size_t>(2 * n));
    for (Index i = 0; i < n; ++i) {
        pos[static_cast<std::size_t>(i)] = i + n;
        pos[static_cast<std::size_t>(i + n)] = i;
    }
    return pos;
}

/// Mean over rows i of -log(exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau)), j = positive[i] and
/// s the cosine similarity. Rows are normalised internally, so any positive row scaling gives
/// the same loss.
template <typename Scalar>
LossResult<Scalar> nt_xent(const Matrix<Scalar>& z, std::span<const Index> positive, Scalar tau)
{
    const Index n = z.rows();
    if (n == 0)
        throw std::invalid_argument("nt_xent needs a non-empty batch");
    if (static_cast<Index>(positive.size()) != n)
        throw std::invalid_argument("nt_xent needs one positive per row");
    if (!(tau > Scalar(0)))
        throw std::invalid_argument("temperature must be positive");
    for (Index i = 0; i < n; ++i) {
        const Index j = positive[static_cast<std::size_t>(i)];
        if (j < 0 || j >= n || j == i)
            throw std::invalid_argument("every row needs a positive other than itself");
    }
    const auto fwd = normalize_rows(z);
    const Matrix<Scalar> logits = (fwd.unit * fwd.unit.transpose()) / tau;

    LossResult<Scalar> res{Scalar(0), Matrix<Scalar>::Zero(n, z.cols())};
    Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(n, n);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(n);
    Eigen::Array<bool, Eigen::Dynamic, 1> others(n);
    for (Index i = 0; i < n; ++i) {
        const Index j = positive[static_cast<std::size_t>(i)];
        others.setConstant(true);
        others(i) = false;
        const auto row = logits.row(i);
        const Scalar lse = masked_logsumexp<Scalar>(row, others, false);
        res.value += lse - row(j);
        for (Index k = 0; k < n; ++k)
            if (k != i)
                dlogits(i, k) += inv * std::exp(row(k) - lse);
        dlogits(i, j) -= inv;
    }
    res.value *= inv;
    // logits = U Uᵀ / tau, so dU = (D + Dᵀ) U / tau
    const Matrix<Scalar> dunit = ((dlogits + dlogits.transpose()) * fwd.unit) / tau;
    res.grad = normalize_rows_backward(fwd, dunit);
    return res;
}

struct SslLossReport {
    double L_f = 0.0;
    double L_b = 0.0;
    double L_id = 0.0;
    double L_total = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    double mean_position = 1.0;
};

template <typename Scalar>
struct IdentityAwareLoss {
    SslLossReport report;
    Matrix<Scalar> grad_face;  // same shape as face_views
    Matrix<Scalar> grad_body;  // same shape as body_views
    Matrix<Scalar> grad_cross; // same shape as cross_views, zero when unaligned
};

struct InBatchStats {
    double top1 = 0.0;
    double top5 = 0.0;
    double mean_position = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0; // anchors without a positive
};

namespace detail {

template <typename Scalar>
InBatchStats rank_positives(const Matrix<Scalar>& sim, std::span<const Index> positive, bool exclude_self)
{
    InBatchStats s;
    for (Index i = 0; i < sim.rows(); ++i) {
        const Index j = positive[static_cast<std::size_t>(i)];
        if (j < 0 || j >= sim.cols() || (exclude_self && j == i)) {
            ++s.skipped;
            continue;
        }
        // rank = 1 + number of competitors strictly more similar than the positive
        std::size_t rank = 1;
        for (Index k = 0; k < sim.cols(); ++k)
            if (k != j && !(exclude_self && k == i) && sim(i, k) > sim(i, j))
                ++rank;
        ++s.evaluated;
        s.top1 += rank <= 1 ? 1.0 : 0.0;
        s.top5 += rank <= 5 ? 1.0 : 0.0;
        s.mean_position += static_cast<double>(rank);
    }
    if (s.evaluated > 0) {
        const auto n = static_cast<double>(s.evaluated);
        s.top1 /= n;
        s.top5 /= n;
        s.mean_position /= n;
    }
    return s;
}

} // namespace detail

/// Every row is an anchor ranked against all other rows by cosine similarity; positive[i] < 0
/// marks an anchor without a positive, which is skipped and counted.
template <typename Scalar>
InBatchStats in_batch_eval(const Matrix<Scalar>& z, std::span<const Index> positive)
{
    if (z.rows() < 2)
        throw std::invalid_argument("in-batch evaluation needs at least two items");
    if (static_cast<Index>(positive.size()) != z.rows())
        throw std::invalid_argument("one positive entry per row expected");
    const auto u = normalize_rows(z).unit;
    return detail::rank_positives<Scalar>(u * u.transpose(), positive, true);
}

/// Query i against every candidate row, positive candidate i (face query -> body gallery).
template <typename Scalar>
InBatchStats cross_modal_eval(const Matrix<Scalar>& queries, const Matrix<Scalar>& candidates)
{
    if (queries.rows() != candidates.rows() || queries.rows() < 2)
        throw std::invalid_argument("cross-modal evaluation needs matching query and candidate rows");
    std::vector<Index> pos(static_cast<std::size_t>(queries.rows()));
    for (Index i = 0; i < queries.rows(); ++i)
        pos[static_cast<std::size_t>(i)] = i;
    const Matrix<Scalar> sim = normalize_rows(queries).unit * normalize_rows(candidates).unit.transpose();
    return detail::rank_positives<Scalar>(sim, pos, false);
}

/// face_views and body_views stack two strong views (view 1 rows, then view 2 rows). cross_views
/// stacks the weak face rows, then the weak body rows of the same instances. Unaligned mode drops
/// the cross term (L_id = 0) but still reports retrieval statistics on the cross rows.
template <typename Scalar>
IdentityAwareLoss<Scalar> identity_aware_loss(const Matrix<Scalar>& face_views, const Matrix<Scalar>& body_views,
                                              const Matrix<Scalar>& cross_views, Scalar tau, bool aligned = true)
{
    if (face_views.rows() % 2 != 0 || body_views.rows() % 2 != 0 || cross_views.rows() % 2 != 0)
        throw std::invalid_argument("view blocks must stack two equally sized halves");
    IdentityAwareLoss<Scalar> out;
    out.grad_face = Matrix<Scalar>::Zero(face_views.rows(), face_views.cols());
    out.grad_body = Matrix<Scalar>::Zero(body_views.rows(), body_views.cols());
    out.grad_cross = Matrix<Scalar>::Zero(cross_views.rows(), cross_views.cols());
    if (face_views.rows() == 0 && body_views.rows() == 0)
        throw std::invalid_argument("identity-aware loss needs face or body views");
    if (face_views.rows() > 0) {
        const auto pos = two_view_positives(face_views.rows() / 2);
        auto r = nt_xent<Scalar>(face_views, pos, tau);
        out.report.L_f = static_cast<double>(r.value);
        out.grad_face = std::move(r.grad);
    }
    if (body_views.rows() > 0) {
        const auto pos = two_view_positives(body_views.rows() / 2);
        auto r = nt_xent<Scalar>(body_views, pos, tau);
        out.report.L_b = static_cast<double>(r.value);
        out.grad_body = std::move(r.grad);
    }
    if (aligned) {
        if (cross_views.rows() == 0)
            throw DataError("no face-body pairs in the batch: the identity alignment term is undefined");
        const auto pos = two_view_positives(cross_views.rows() / 2);
        auto r = nt_xent<Scalar>(cross_views, pos, tau);
        out.report.L_id = static_cast<double>(r.value);
        out.grad_cross = std::move(r.grad);
    }
    out.report.L_total = out.report.L_f + out.report.L_b + out.report.L_id;
    const Index nc = cross_views.rows() / 2;
    if (nc >= 2) {
        const auto s = cross_modal_eval<Scalar>(cross_views.topRows(nc), cross_views.bottomRows(nc));
        out.report.top1 = s.top1;
        out.report.top5 = s.top5;
        out.report.mean_position = s.mean_position;
    }
    return out;
}

} // namespace comicreid
