#pragma once

// Identity projector: fuses face and body backbone features, applies one linear layer and
// L2-normalises the result. Forward and backward work on batches (one instance per row).

#include "comicreid/similarity.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace comicreid {

enum class Fusion { Sum, Concat, WeightedSum, CoeffSum };
enum class Padding { Zero, Trainable };

std::string to_string(Fusion f);
std::string to_string(Padding p);
Fusion fusion_from_string(const std::string& s);
Padding padding_from_string(const std::string& s);

struct ProjectorConfig {
    Index input_dim = 0;
    Index output_dim = 256;
    Fusion fusion = Fusion::Sum;
    Padding padding = Padding::Zero;
    double random_mask_rate = 0.0; // split equally between face and body
    bool normalize = true;
};

/// Face and body features for a batch; absent parts have their presence flag cleared and
/// their row content ignored.
template <typename Scalar>
struct PartBatch {
    Matrix<Scalar> face;
    Matrix<Scalar> body;
    std::vector<std::uint8_t> has_face;
    std::vector<std::uint8_t> has_body;

    Index size() const { return static_cast<Index>(has_face.size()); }
};

template <typename Scalar>
class Projector {
public:
    struct Cache {
        Matrix<Scalar> face, body; // after padding
        std::vector<std::uint8_t> face_padded, body_padded;
        Matrix<Scalar> fused;
        Matrix<Scalar> pre;
        RowNormalized<Scalar> norm;
    };

    struct Gradients {
        Vector<Scalar> params;
        Matrix<Scalar> face;
        Matrix<Scalar> body;
    };

    Projector() = default;

    explicit Projector(const ProjectorConfig& cfg) : cfg_(cfg)
    {
        if (cfg.input_dim <= 0 || cfg.output_dim <= 0)
            throw std::invalid_argument("projector dimensions must be positive");
        if (!(cfg.random_mask_rate >= 0.0 && cfg.random_mask_rate < 1.0))
            throw std::invalid_argument("random mask rate must be in [0, 1)");
        const Index in = cfg.input_dim;
        W_ = Matrix<Scalar>::Zero(cfg.output_dim, fused_dim());
        b_ = Vector<Scalar>::Zero(cfg.output_dim);
        pad_face_ = Vector<Scalar>::Zero(in);
        pad_body_ = Vector<Scalar>::Zero(in);
        logit_face_ = Vector<Scalar>::Zero(in);
        logit_body_ = Vector<Scalar>::Zero(in);
        coeff_ = Vector<Scalar>::Zero(2);
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and bias.
    void initialize(Rng& rng)
    {
        const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fused_dim()));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (Index i = 0; i < W_.rows(); ++i)
            for (Index j = 0; j < W_.cols(); ++j)
                W_(i, j) = bound * static_cast<Scalar>(u(rng));
        for (Index i = 0; i < b_.size(); ++i)
            b_(i) = bound * static_cast<Scalar>(u(rng));
    }

    const ProjectorConfig& config() const { return cfg_; }
    Index fused_dim() const { return cfg_.fusion == Fusion::Concat ? 2 * cfg_.input_dim : cfg_.input_dim; }

    Matrix<Scalar>& weight() { return W_; }
    const Matrix<Scalar>& weight() const { return W_; }
    Vector<Scalar>& bias() { return b_; }
    const Vector<Scalar>& bias() const { return b_; }
    Vector<Scalar>& face_padding() { return pad_face_; }
    Vector<Scalar>& body_padding() { return pad_body_; }
    Vector<Scalar>& face_logits() { return logit_face_; }
    Vector<Scalar>& body_logits() { return logit_body_; }
    Vector<Scalar>& coefficient_logits() { return coeff_; }

    /// Flat layout: W (row-major), b, then padding vectors (trainable padding only), then the
    /// fusion weights (weighted_sum: face and body logits; coeff_sum: two logits).
    Index parameter_count() const
    {
        Index n = W_.size() + b_.size();
        if (cfg_.padding == Padding::Trainable)
            n += 2 * cfg_.input_dim;
        if (cfg_.fusion == Fusion::WeightedSum)
            n += 2 * cfg_.input_dim;
        if (cfg_.fusion == Fusion::CoeffSum)
            n += 2;
        return n;
    }

    Vector<Scalar> parameters() const
    {
        Vector<Scalar> out(parameter_count());
        Index k = 0;
        const auto put = [&](const auto& m) {
            for (Index i = 0; i < m.size(); ++i)
                out(k++) = m.data()[i];
        };
        visit_blocks(*this, put);
        return out;
    }

    void set_parameters(const Vector<Scalar>& p)
    {
        if (p.size() != parameter_count())
            throw std::invalid_argument("projector parameter vector has the wrong size");
        Index k = 0;
        const auto get = [&](auto& m) {
            for (Index i = 0; i < m.size(); ++i)
                m.data()[i] = p(k++);
        };
        visit_blocks(*this, get);
    }

    /// Projects a batch. With a non-null mask_rng and a positive mask rate, instances that have
    /// both parts lose their face with probability rate/2 or their body with probability rate/2.
    Matrix<Scalar> forward(const PartBatch<Scalar>& in, Cache* cache = nullptr, Rng* mask_rng = nullptr) const
    {
        const Index n = in.size();
        const Index d = cfg_.input_dim;
        if (static_cast<Index>(in.has_body.size()) != n || in.face.rows() != n || in.body.rows() != n)
            throw std::invalid_argument("part batch rows disagree");
        if (n > 0 && (in.face.cols() != d || in.body.cols() != d))
            throw std::invalid_argument("part features do not match the projector input dimension");
        Cache local;
        Cache& c = cache ? *cache : local;
        c.face.resize(n, d);
        c.body.resize(n, d);
        c.face_padded.assign(static_cast<std::size_t>(n), 0);
        c.body_padded.assign(static_cast<std::size_t>(n), 0);
        const double rate = cfg_.random_mask_rate;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (Index i = 0; i < n; ++i) {
            const auto si = static_cast<std::size_t>(i);
            bool face = in.has_face[si] != 0, body = in.has_body[si] != 0;
            if (!face && !body)
                throw std::invalid_argument("instance has neither face nor body features");
            if (mask_rng && rate > 0.0 && face && body) {
                const double u = unif(*mask_rng);
                if (u < rate / 2)
                    face = false;
                else if (u < rate)
                    body = false;
            }
            c.face_padded[si] = !face;
            c.body_padded[si] = !body;
            c.face.row(i) = face ? Vector<Scalar>(in.face.row(i).transpose()) : pad_face_;
            c.body.row(i) = body ? Vector<Scalar>(in.body.row(i).transpose()) : pad_body_;
        }

        switch (cfg_.fusion) {
        case Fusion::Sum:
            c.fused = c.face + c.body;
            break;
        case Fusion::Concat:
            c.fused.resize(n, 2 * d);
            c.fused.leftCols(d) = c.face;
            c.fused.rightCols(d) = c.body;
            break;
        case Fusion::WeightedSum: {
            const Vector<Scalar> wf = face_weights();
            c.fused = (c.face.array().rowwise() * wf.transpose().array() +
                       c.body.array().rowwise() * (Scalar(1) - wf.array()).transpose())
                          .matrix();
            break;
        }
        case Fusion::CoeffSum: {
            const auto cf = coefficients();
            c.fused = cf.first * c.face + cf.second * c.body;
            break;
        }
        }
        c.pre = c.fused * W_.transpose();
        c.pre.rowwise() += b_.transpose();
        if (!cfg_.normalize)
            return c.pre;
        c.norm = normalize_rows(c.pre);
        return c.norm.unit;
    }

    /// Gradients of a scalar loss given its gradient w.r.t. the forward output.
    Gradients backward(const Cache& c, const Matrix<Scalar>& grad_out) const
    {
        const Index d = cfg_.input_dim;
        const Matrix<Scalar> dpre = cfg_.normalize ? normalize_rows_backward(c.norm, grad_out) : grad_out;
        const Matrix<Scalar> dW = dpre.transpose() * c.fused;
        const Vector<Scalar> db = dpre.colwise().sum().transpose();
        const Matrix<Scalar> dfused = dpre * W_;

        Matrix<Scalar> dface, dbody;
        Vector<Scalar> dlogit_face = Vector<Scalar>::Zero(d), dlogit_body = Vector<Scalar>::Zero(d);
        Vector<Scalar> dcoeff = Vector<Scalar>::Zero(2);
        switch (cfg_.fusion) {
        case Fusion::Sum:
            dface = dfused;
            dbody = dfused;
            break;
        case Fusion::Concat:
            dface = dfused.leftCols(d);
            dbody = dfused.rightCols(d);
            break;
        case Fusion::WeightedSum: {
            const Vector<Scalar> wf = face_weights();
            dface = (dfused.array().rowwise() * wf.transpose().array()).matrix();
            dbody = (dfused.array().rowwise() * (Scalar(1) - wf.array()).transpose()).matrix();
            const Vector<Scalar> dw = (dfused.array() * (c.face - c.body).array()).colwise().sum().transpose();
            dlogit_face = (dw.array() * wf.array() * (Scalar(1) - wf.array())).matrix();
            dlogit_body = -dlogit_face;
            break;
        }
        case Fusion::CoeffSum: {
            const auto cf = coefficients();
            dface = cf.first * dfused;
            dbody = cf.second * dfused;
            const Scalar g0 = (dfused.array() * c.face.array()).sum();
            const Scalar g1 = (dfused.array() * c.body.array()).sum();
            const Scalar mean = cf.first * g0 + cf.second * g1;
            dcoeff << cf.first * (g0 - mean), cf.second * (g1 - mean);
            break;
        }
        }

        Vector<Scalar> dpad_face = Vector<Scalar>::Zero(d), dpad_body = Vector<Scalar>::Zero(d);
        for (Index i = 0; i < dface.rows(); ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (c.face_padded[si]) {
                dpad_face += dface.row(i).transpose();
                dface.row(i).setZero();
            }
            if (c.body_padded[si]) {
                dpad_body += dbody.row(i).transpose();
                dbody.row(i).setZero();
            }
        }

        Gradients g;
        g.params.resize(parameter_count());
        Index k = 0;
        const auto put = [&](const auto& m) {
            for (Index i = 0; i < m.size(); ++i)
                g.params(k++) = m.data()[i];
        };
        put(dW);
        put(db);
        if (cfg_.padding == Padding::Trainable) {
            put(dpad_face);
            put(dpad_body);
        }
        if (cfg_.fusion == Fusion::WeightedSum) {
            put(dlogit_face);
            put(dlogit_body);
        }
        if (cfg_.fusion == Fusion::CoeffSum)
            put(dcoeff);
        g.face = std::move(dface);
        g.body = std::move(dbody);
        return g;
    }

    /// Single-instance convenience wrapper around forward.
    Vector<Scalar> project(const Vector<Scalar>* face, const Vector<Scalar>* body) const
    {
        if (!face && !body)
            throw std::invalid_argument("fuse_and_project needs a face or a body feature");
        PartBatch<Scalar> b;
        b.face = Matrix<Scalar>::Zero(1, cfg_.input_dim);
        b.body = Matrix<Scalar>::Zero(1, cfg_.input_dim);
        if (face)
            b.face.row(0) = face->transpose();
        if (body)
            b.body.row(0) = body->transpose();
        b.has_face = {static_cast<std::uint8_t>(face != nullptr)};
        b.has_body = {static_cast<std::uint8_t>(body != nullptr)};
        return forward(b).row(0).transpose();
    }

    /// Per-dimension face weight of the weighted sum (softmax over the two logits).
    Vector<Scalar> face_weights() const
    {
        return (Scalar(1) / (Scalar(1) + (logit_body_ - logit_face_).array().exp())).matrix();
    }

    std::pair<Scalar, Scalar> coefficients() const
    {
        const Scalar hi = std::max(coeff_(0), coeff_(1));
        const Scalar e0 = std::exp(coeff_(0) - hi), e1 = std::exp(coeff_(1) - hi);
        return {e0 / (e0 + e1), e1 / (e0 + e1)};
    }

private:
    template <typename Self, typename F>
    static void visit_blocks(Self& self, F&& f)
    {
        f(self.W_);
        f(self.b_);
        if (self.cfg_.padding == Padding::Trainable) {
            f(self.pad_face_);
            f(self.pad_body_);
        }
        if (self.cfg_.fusion == Fusion::WeightedSum) {
            f(self.logit_face_);
            f(self.logit_body_);
        }
        if (self.cfg_.fusion == Fusion::CoeffSum)
            f(self.coeff_);
    }

    ProjectorConfig cfg_;
    Matrix<Scalar> W_;
    Vector<Scalar> b_;
    Vector<Scalar> pad_face_, pad_body_;
    Vector<Scalar> logit_face_, logit_body_;
    Vector<Scalar> coeff_;
};

/// fuse_and_project for one instance.
template <typename Scalar>
Vector<Scalar> fuse_and_project(const Vector<Scalar>* face, const Vector<Scalar>* body, const Projector<Scalar>& p)
{
    return p.project(face, body);
}

} // namespace comicreid
