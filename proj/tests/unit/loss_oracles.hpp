#pragma once

// Straightforward reference implementations, written from the formulas with plain loops and
// no shared code with the library.

#include "comicreid/losses.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using comicreid::MatrixXd;

inline double dot(const MatrixXd& z, long i, long j)
{
    double s = 0;
    for (long c = 0; c < z.cols(); ++c)
        s += z(i, c) * z(j, c);
    return s;
}

inline double dist(const MatrixXd& z, long i, long j)
{
    double s = 0;
    for (long c = 0; c < z.cols(); ++c)
        s += (z(i, c) - z(j, c)) * (z(i, c) - z(j, c));
    return std::sqrt(s);
}

inline double cosine(const MatrixXd& z, long i, long j)
{
    return dot(z, i, j) / std::sqrt(dot(z, i, i) * dot(z, j, j));
}

inline double nt_xent(const MatrixXd& z, const std::vector<long>& pos, double tau)
{
    double total = 0;
    for (long i = 0; i < z.rows(); ++i) {
        double denom = 0;
        for (long k = 0; k < z.rows(); ++k)
            if (k != i)
                denom += std::exp(cosine(z, i, k) / tau);
        total += -std::log(std::exp(cosine(z, i, pos[static_cast<std::size_t>(i)]) / tau) / denom);
    }
    return total / static_cast<double>(z.rows());
}

inline double contrastive(const MatrixXd& z, const std::vector<comicreid::LabeledPair>& pairs, double margin)
{
    double total = 0;
    for (const auto& p : pairs) {
        const double d = dist(z, p.a, p.b);
        const double h = std::max(0.0, margin - d);
        total += (1 - p.y) * 0.5 * d * d + p.y * 0.5 * h * h;
    }
    return total / static_cast<double>(pairs.size());
}

inline double triplet(const MatrixXd& z, const std::vector<comicreid::Triplet>& ts, double margin)
{
    double total = 0;
    for (const auto& t : ts)
        total += std::max(0.0, dist(z, t.a, t.p) - dist(z, t.a, t.n) + margin);
    return total / static_cast<double>(ts.size());
}

inline double multi_similarity(const MatrixXd& z, const comicreid::PairSets& pairs, double alpha, double beta,
                               double base)
{
    double total = 0;
    for (long i = 0; i < z.rows(); ++i) {
        double sp = 0, sn = 0;
        for (const auto& p : pairs.positive)
            if (p.a == i)
                sp += std::exp(-alpha * (cosine(z, i, p.b) - base));
        for (const auto& p : pairs.negative)
            if (p.a == i)
                sn += std::exp(beta * (cosine(z, i, p.b) - base));
        total += std::log(1 + sp) / alpha + std::log(1 + sn) / beta;
    }
    return total / static_cast<double>(z.rows());
}

inline double tuplet_margin(const MatrixXd& z, const comicreid::PairSets& pairs, double margin_deg, double scale)
{
    const double m = margin_deg * std::numbers::pi / 180.0;
    double total = 0;
    for (const auto& p : pairs.positive) {
        const double c = std::clamp(cosine(z, p.a, p.b), -1 + 1e-7, 1 - 1e-7);
        const double shifted = std::cos(std::acos(c) - m);
        double s = 0;
        bool any = false;
        for (const auto& n : pairs.negative)
            if (n.a == p.a) {
                s += std::exp(scale * (cosine(z, n.a, n.b) - shifted));
                any = true;
            }
        if (any)
            total += std::log(1 + s);
    }
    return total / static_cast<double>(pairs.positive.size());
}

inline double intra_pair_variance(const MatrixXd& z, const comicreid::PairSets& pairs, double pe, double ne)
{
    double total = 0;
    if (!pairs.positive.empty()) {
        double mean = 0;
        for (const auto& p : pairs.positive)
            mean += cosine(z, p.a, p.b);
        mean /= static_cast<double>(pairs.positive.size());
        double acc = 0;
        for (const auto& p : pairs.positive) {
            const double r = std::max(0.0, (1 - pe) * mean - cosine(z, p.a, p.b));
            acc += r * r;
        }
        total += acc / static_cast<double>(pairs.positive.size());
    }
    if (!pairs.negative.empty()) {
        double mean = 0;
        for (const auto& p : pairs.negative)
            mean += cosine(z, p.a, p.b);
        mean /= static_cast<double>(pairs.negative.size());
        double acc = 0;
        for (const auto& p : pairs.negative) {
            const double r = std::max(0.0, cosine(z, p.a, p.b) - (1 + ne) * mean);
            acc += r * r;
        }
        total += acc / static_cast<double>(pairs.negative.size());
    }
    return total;
}

/// Central finite-difference gradient of f at x.
inline MatrixXd numeric_grad(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x, double h = 1e-6)
{
    MatrixXd g(x.rows(), x.cols());
    MatrixXd y = x;
    for (long i = 0; i < x.rows(); ++i)
        for (long j = 0; j < x.cols(); ++j) {
            const double v = y(i, j);
            y(i, j) = v + h;
            const double up = f(y);
            y(i, j) = v - h;
            const double down = f(y);
            y(i, j) = v;
            g(i, j) = (up - down) / (2 * h);
        }
    return g;
}

/// Relative error of two gradients measured on the whole array.
inline double grad_rel_err(const MatrixXd& a, const MatrixXd& b)
{
    const double scale = std::max({a.norm(), b.norm(), 1e-8});
    return (a - b).norm() / scale;
}

inline double rel_err(double a, double b)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

} // namespace oracle
