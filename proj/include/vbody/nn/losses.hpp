#pragma once

#include <cmath>

#include "vbody/nn/tensor.hpp"

namespace vbody::nn {

template <class T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;  // dL/d(input)
};

// Mean binary cross-entropy of sigmoid(logits) against a constant target,
// computed in the numerically stable logit form.
template <class T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, T target) {
    LossResult<T> r;
    r.grad = Tensor<T>::zeros_like(logits);
    const std::size_t n = logits.data.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = static_cast<double>(logits.data[i]);
        acc += std::max(l, 0.0) - l * static_cast<double>(target) +
               std::log1p(std::exp(-std::abs(l)));
        const double s = 1.0 / (1.0 + std::exp(-l));
        r.grad.data[i] = static_cast<T>((s - static_cast<double>(target)) /
                                        static_cast<double>(n));
    }
    r.value = acc / static_cast<double>(n);
    return r;
}

// Mean absolute error against a target tensor; subgradient 0 at ties.
template <class T>
LossResult<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target))
        throw ShapeError("l1_loss: shapes differ: " + pred.shape_string() + " vs " +
                         target.shape_string());
    LossResult<T> r;
    r.grad = Tensor<T>::zeros_like(pred);
    const std::size_t n = pred.data.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred.data[i]) -
                         static_cast<double>(target.data[i]);
        acc += std::abs(d);
        r.grad.data[i] =
            static_cast<T>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) /
                           static_cast<double>(n));
    }
    r.value = acc / static_cast<double>(n);
    return r;
}

// Mean squared deviation of raw scores from a constant target
// (least-squares adversarial term).
template <class T>
LossResult<T> lsgan_loss(const Tensor<T>& scores, T target) {
    LossResult<T> r;
    r.grad = Tensor<T>::zeros_like(scores);
    const std::size_t n = scores.data.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d =
            static_cast<double>(scores.data[i]) - static_cast<double>(target);
        acc += d * d;
        r.grad.data[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
    }
    r.value = acc / static_cast<double>(n);
    return r;
}

}  // namespace vbody::nn
