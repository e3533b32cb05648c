#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "llmrl/core/error.hpp"

namespace llmrl::rl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected ReLU network with a linear output layer. Parameters live in
/// one flat vector, laid out per layer as W (out x in, column-major) then b.
class QNetwork {
public:
    struct Cache {
        std::vector<Matrix> activations;  // input, then each hidden post-activation
    };

    QNetwork() = default;

    QNetwork(std::size_t inputs, std::vector<std::size_t> hidden, std::size_t outputs = 2) {
        sizes_.push_back(inputs);
        for (auto h : hidden) sizes_.push_back(h);
        sizes_.push_back(outputs);
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets_.push_back(total);
            total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        params_.assign(total, 0.0);
    }

    /// He-uniform weights, zero biases.
    void initialize(std::mt19937_64& rng) {
        for (std::size_t l = 0; l < layers(); ++l) {
            const double bound = std::sqrt(6.0 / static_cast<double>(sizes_[l]));
            std::uniform_real_distribution<double> dist(-bound, bound);
            auto w = weights(l);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
            bias(l).setZero();
        }
    }

    std::size_t inputs() const { return sizes_.front(); }
    std::size_t outputs() const { return sizes_.back(); }
    std::size_t layers() const { return sizes_.size() - 1; }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    Eigen::Map<Matrix> weights(std::size_t l) {
        return {params_.data() + offsets_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                static_cast<Eigen::Index>(sizes_[l])};
    }
    Eigen::Map<const Matrix> weights(std::size_t l) const {
        return {params_.data() + offsets_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                static_cast<Eigen::Index>(sizes_[l])};
    }
    Eigen::Map<Vector> bias(std::size_t l) {
        return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
    }
    Eigen::Map<const Vector> bias(std::size_t l) const {
        return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
    }

    /// Column-batched forward pass: x is inputs x batch, result outputs x batch.
    Matrix forward(const Matrix& x) const {
        Matrix a = x;
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix z = weights(l) * a;
            z.colwise() += bias(l);
            if (l + 1 < layers()) z = z.cwiseMax(0.0);
            a = std::move(z);
        }
        return a;
    }

    Matrix forward(const Matrix& x, Cache& cache) const {
        cache.activations.clear();
        cache.activations.push_back(x);
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix z = weights(l) * cache.activations.back();
            z.colwise() += bias(l);
            if (l + 1 < layers()) {
                cache.activations.push_back(z.cwiseMax(0.0));
            } else {
                return z;
            }
        }
        return {};
    }

    /// Gradient of sum(grad_out .* output) with respect to the parameters,
    /// written into `grad` (same layout as parameters()).
    void backward(const Cache& cache, const Matrix& grad_out, std::span<double> grad) const {
        if (grad.size() != params_.size()) throw ArgumentError("ddqn_agent", "gradient buffer size mismatch");
        Matrix delta = grad_out;
        for (std::size_t l = layers(); l-- > 0;) {
            const Matrix& a = cache.activations[l];
            Eigen::Map<Matrix> gw(grad.data() + offsets_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                                  static_cast<Eigen::Index>(sizes_[l]));
            Eigen::Map<Vector> gb(grad.data() + offsets_[l] + sizes_[l + 1] * sizes_[l],
                                  static_cast<Eigen::Index>(sizes_[l + 1]));
            gw.noalias() = delta * a.transpose();
            gb = delta.rowwise().sum();
            if (l > 0) {
                Matrix back = weights(l).transpose() * delta;
                delta = back.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
            }
        }
    }

    bool all_finite() const {
        for (double p : params_) {
            if (!std::isfinite(p)) return false;
        }
        return true;
    }

    friend bool operator==(const QNetwork& a, const QNetwork& b) {
        return a.sizes_ == b.sizes_ && a.params_ == b.params_;
    }

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

/// Adam over a flat parameter vector.
class Adam {
public:
    explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
};

}  // namespace llmrl::rl
