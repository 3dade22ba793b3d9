#pragma once

#include "comicreid/types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace comicreid {

/// Scales g in place so its L2 norm is at most max_norm. Returns the norm before clipping.
template <typename Scalar>
Scalar clip_grad_norm(Vector<Scalar>& g, Scalar max_norm)
{
    const Scalar n = g.norm();
    if (max_norm > Scalar(0) && n > max_norm)
        g *= max_norm / (n + Scalar(1e-6));
    return n;
}

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay over one flat parameter vector.
template <typename Scalar>
class AdamW {
public:
    AdamW() = default;
    AdamW(Index size, AdamWConfig cfg) : cfg_(cfg), m_(Vector<Scalar>::Zero(size)), v_(Vector<Scalar>::Zero(size)) {}

    void step(Vector<Scalar>& params, const Vector<Scalar>& grad, Scalar lr)
    {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::invalid_argument("optimizer state size mismatch");
        ++t_;
        const Scalar b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
        params *= Scalar(1) - lr * static_cast<Scalar>(cfg_.weight_decay);
        m_ = b1 * m_ + (Scalar(1) - b1) * grad;
        v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
        const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
        const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
        params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + static_cast<Scalar>(cfg_.eps));
    }

    long steps() const { return t_; }

private:
    AdamWConfig cfg_;
    Vector<Scalar> m_, v_;
    long t_ = 0;
};

/// Gradient descent with decoupled weight decay and optional heavy-ball momentum.
template <typename Scalar>
class DecoupledSgd {
public:
    DecoupledSgd() = default;
    DecoupledSgd(Index size, double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay), buf_(Vector<Scalar>::Zero(size))
    {
    }

    void step(Vector<Scalar>& params, const Vector<Scalar>& grad, Scalar lr)
    {
        if (params.size() != buf_.size() || grad.size() != buf_.size())
            throw std::invalid_argument("optimizer state size mismatch");
        params *= Scalar(1) - lr * static_cast<Scalar>(weight_decay_);
        buf_ = static_cast<Scalar>(momentum_) * buf_ + grad;
        params -= lr * buf_;
    }

private:
    double momentum_ = 0.0;
    double weight_decay_ = 0.0;
    Vector<Scalar> buf_;
};

/// Cosine annealing from base to floor over total steps.
inline double cosine_lr(double base, double floor, long step, long total)
{
    if (total <= 1)
        return base;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

inline double exponential_lr(double base, double gamma, long epoch)
{
    return base * std::pow(gamma, static_cast<double>(epoch));
}

} // namespace comicreid
