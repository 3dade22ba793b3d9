#pragma once

// Fully connected stack with ReLU between layers, forward and backward on row batches.

#include "comicreid/types.hpp"

#include <random>
#include <stdexcept>
#include <vector>

namespace comicreid {

template <typename Scalar>
class Mlp {
public:
    struct Cache {
        std::vector<Matrix<Scalar>> inputs; // input of every layer
        std::vector<Matrix<Scalar>> pre;    // pre-activation of every layer
    };

    struct Gradients {
        Vector<Scalar> params;
        Matrix<Scalar> input;
    };

    Mlp() = default;

    /// widths = {in, hidden..., out}; relu_last applies ReLU to the output too.
    explicit Mlp(std::vector<Index> widths, bool relu_last = false) : widths_(std::move(widths)), relu_last_(relu_last)
    {
        if (widths_.size() < 2)
            throw std::invalid_argument("an MLP needs at least an input and an output width");
        for (auto w : widths_)
            if (w <= 0)
                throw std::invalid_argument("MLP widths must be positive");
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            W_.push_back(Matrix<Scalar>::Zero(widths_[l + 1], widths_[l]));
            b_.push_back(Vector<Scalar>::Zero(widths_[l + 1]));
        }
    }

    /// He-uniform weights, zero biases.
    void initialize(Rng& rng)
    {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& W : W_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(W.cols()));
            for (Index i = 0; i < W.rows(); ++i)
                for (Index j = 0; j < W.cols(); ++j)
                    W(i, j) = static_cast<Scalar>(bound * u(rng));
        }
        for (auto& b : b_)
            b.setZero();
    }

    const std::vector<Index>& widths() const { return widths_; }
    bool relu_last() const { return relu_last_; }
    std::size_t layers() const { return W_.size(); }
    Index input_dim() const { return widths_.front(); }
    Index output_dim() const { return widths_.back(); }

    Index parameter_count() const
    {
        Index n = 0;
        for (std::size_t l = 0; l < W_.size(); ++l)
            n += W_[l].size() + b_[l].size();
        return n;
    }

    /// Flat layout: per layer W (row-major) then b.
    Vector<Scalar> parameters() const
    {
        Vector<Scalar> out(parameter_count());
        Index k = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            out.segment(k, W_[l].size()) = Eigen::Map<const Vector<Scalar>>(W_[l].data(), W_[l].size());
            k += W_[l].size();
            out.segment(k, b_[l].size()) = b_[l];
            k += b_[l].size();
        }
        return out;
    }

    void set_parameters(const Vector<Scalar>& p)
    {
        if (p.size() != parameter_count())
            throw std::invalid_argument("MLP parameter vector has the wrong size");
        Index k = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            Eigen::Map<Vector<Scalar>>(W_[l].data(), W_[l].size()) = p.segment(k, W_[l].size());
            k += W_[l].size();
            b_[l] = p.segment(k, b_[l].size());
            k += b_[l].size();
        }
    }

    Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache* cache = nullptr) const
    {
        if (x.cols() != input_dim())
            throw std::invalid_argument("MLP input width mismatch");
        if (cache) {
            cache->inputs.clear();
            cache->pre.clear();
        }
        Matrix<Scalar> h = x;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            Matrix<Scalar> z = h * W_[l].transpose();
            z.rowwise() += b_[l].transpose();
            if (cache) {
                cache->inputs.push_back(h);
                cache->pre.push_back(z);
            }
            h = activates(l) ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : z;
        }
        return h;
    }

    /// Output of the first `count` layers, activated as inside the full stack.
    Matrix<Scalar> forward_prefix(const Matrix<Scalar>& x, std::size_t count) const
    {
        if (x.cols() != input_dim())
            throw std::invalid_argument("MLP input width mismatch");
        if (count > W_.size())
            throw std::invalid_argument("prefix longer than the MLP");
        Matrix<Scalar> h = x;
        for (std::size_t l = 0; l < count; ++l) {
            Matrix<Scalar> z = h * W_[l].transpose();
            z.rowwise() += b_[l].transpose();
            h = activates(l) ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : z;
        }
        return h;
    }

    Gradients backward(const Cache& cache, const Matrix<Scalar>& grad_out) const
    {
        Gradients g;
        g.params.resize(parameter_count());
        std::vector<Index> offset(W_.size());
        Index k = 0;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            offset[l] = k;
            k += W_[l].size() + b_[l].size();
        }
        Matrix<Scalar> d = grad_out;
        for (std::size_t l = W_.size(); l-- > 0;) {
            if (activates(l))
                d = (cache.pre[l].array() > Scalar(0)).select(d, Scalar(0));
            const Matrix<Scalar> dW = d.transpose() * cache.inputs[l];
            g.params.segment(offset[l], dW.size()) = Eigen::Map<const Vector<Scalar>>(dW.data(), dW.size());
            g.params.segment(offset[l] + dW.size(), b_[l].size()) = d.colwise().sum().transpose();
            d = d * W_[l];
        }
        g.input = std::move(d);
        return g;
    }

private:
    bool activates(std::size_t l) const { return l + 1 < W_.size() || relu_last_; }

    std::vector<Index> widths_;
    bool relu_last_ = false;
    std::vector<Matrix<Scalar>> W_;
    std::vector<Vector<Scalar>> b_;
};

} // namespace comicreid
