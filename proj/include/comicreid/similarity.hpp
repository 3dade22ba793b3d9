#pragma once

#include "comicreid/types.hpp"

#include <cmath>
#include <stdexcept>

namespace comicreid {

/// Value of a scalar loss together with its gradient w.r.t. the input rows.
template <typename Scalar>
struct LossResult {
    Scalar value{0};
    Matrix<Scalar> grad;
};

template <typename Scalar>
struct RowNormalized {
    Matrix<Scalar> unit;
    Vector<Scalar> norms;
};

/// Divides every row by its L2 norm. Non-finite input is a NumericError, zero rows are
/// invalid arguments.
template <typename Derived>
RowNormalized<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x)
{
    using Scalar = typename Derived::Scalar;
    RowNormalized<Scalar> out;
    out.norms = x.rowwise().norm();
    if (!x.allFinite() || !out.norms.allFinite())
        throw NumericError("non-finite rows cannot be normalised");
    if ((out.norms.array() <= Scalar(0)).any())
        throw std::invalid_argument("rows must be non-zero to normalise");
    out.unit = x.array().colwise() / out.norms.array();
    return out;
}

/// Pulls a gradient on normalised rows back to the raw rows: (I - u uᵀ) g / ‖x‖.
template <typename Scalar>
Matrix<Scalar> normalize_rows_backward(const RowNormalized<Scalar>& fwd, const Matrix<Scalar>& grad_unit)
{
    const Vector<Scalar> radial = (grad_unit.array() * fwd.unit.array()).rowwise().sum();
    Matrix<Scalar> g = grad_unit - (fwd.unit.array().colwise() * radial.array()).matrix();
    return g.array().colwise() / fwd.norms.array();
}

/// log(exp(x_1) + ... + exp(x_n)) over the entries selected by `mask`, optionally with an
/// extra exp(0) term. Returns -inf for an empty selection without the extra term.
template <typename Scalar, typename Values, typename Mask>
Scalar masked_logsumexp(const Values& x, const Mask& mask, bool add_one)
{
    Scalar hi = add_one ? Scalar(0) : -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < x.size(); ++k)
        if (mask(k))
            hi = std::max(hi, x(k));
    if (!std::isfinite(hi))
        return hi;
    Scalar acc = add_one ? std::exp(-hi) : Scalar(0);
    for (Eigen::Index k = 0; k < x.size(); ++k)
        if (mask(k))
            acc += std::exp(x(k) - hi);
    return hi + std::log(acc);
}

} // namespace comicreid
