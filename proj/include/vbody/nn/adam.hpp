#pragma once

#include <cmath>
#include <vector>

#include "vbody/nn/tensor.hpp"

namespace vbody::nn {

// Scales gradients so their global L2 norm does not exceed max_norm.
// Returns the measured post-clip norm.
template <class T>
double clip_global_norm(const std::vector<ParamRef<T>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (T g : *p.grad) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / norm);
        for (const auto& p : params)
            for (T& g : *p.grad) g *= scale;
        double sq2 = 0.0;
        for (const auto& p : params)
            for (T g : *p.grad) sq2 += static_cast<double>(g) * static_cast<double>(g);
        return std::sqrt(sq2);
    }
    return norm;
}

template <class T>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ParamRef<T>> params, double beta1 = 0.5,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& value = *params_[pi].value;
            const auto& grad = *params_[pi].grad;
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<ParamRef<T>> params_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    // Moments kept in double regardless of T for stable tiny updates.
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace vbody::nn
