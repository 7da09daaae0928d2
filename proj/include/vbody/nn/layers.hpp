#pragma once

#include <algorithm>
#include <cmath>

#include "vbody/nn/tensor.hpp"

namespace vbody::nn {

namespace detail {

// Output index range [lo, hi) for which in = out*stride + k_off - pad stays
// inside [0, in_dim).
inline std::pair<int, int> conv_range(int out_dim, int in_dim, int k_off,
                                      int stride, int pad) {
    int lo = 0;
    if (pad > k_off) lo = (pad - k_off + stride - 1) / stride;
    int hi = std::min(out_dim, (in_dim + pad - k_off + stride - 1) / stride);
    return {lo, std::max(lo, hi)};
}

inline int conv_out_dim(int in_dim, int k, int stride, int pad) {
    return (in_dim + 2 * pad - k) / stride + 1;
}

constexpr int kMaxKernel = 8;

// Per-tap valid output ranges and the interior where all taps are valid,
// computed once per convolution pass.
struct TapRanges {
    std::array<std::pair<int, int>, kMaxKernel> tap;
    int interior_lo = 0, interior_hi = 0;
    int any_hi = 0;  // past this, no tap contributes

    TapRanges(int out_dim, int in_dim, int k, int stride, int pad) {
        interior_lo = 0;
        interior_hi = out_dim;
        for (int kx = 0; kx < k; ++kx) {
            tap[static_cast<std::size_t>(kx)] =
                conv_range(out_dim, in_dim, kx, stride, pad);
            interior_lo = std::max(interior_lo, tap[static_cast<std::size_t>(kx)].first);
            interior_hi = std::min(interior_hi, tap[static_cast<std::size_t>(kx)].second);
            any_hi = std::max(any_hi, tap[static_cast<std::size_t>(kx)].second);
        }
        interior_hi = std::max(interior_hi, interior_lo);
        any_hi = std::max(any_hi, interior_hi);
    }
};

// Fused-tap row kernels. K/S are compile-time for the shapes the networks
// use (k3s1, k4s2, k4s1); K == 0 falls back to runtime values.

// out[xo] += sum_kx w[kx] * in[xo*S + kx - P]
template <int K, int S, class T>
inline void row_fwd(T* __restrict__ out, const T* __restrict__ in,
                    const T* __restrict__ w, int k_rt, int s_rt, int P, int Xi,
                    const TapRanges& r) {
    const int k = K > 0 ? K : k_rt;
    const int s = S > 0 ? S : s_rt;
    auto edge = [&](int lo, int hi) {
        for (int xo = lo; xo < hi; ++xo) {
            T acc = T(0);
            for (int kx = 0; kx < k; ++kx) {
                const int xi = xo * s + kx - P;
                if (xi >= 0 && xi < Xi) acc += w[kx] * in[xi];
            }
            out[xo] += acc;
        }
    };
    edge(0, r.interior_lo);
    for (int xo = r.interior_lo; xo < r.interior_hi; ++xo) {
        const T* p = in + xo * s - P;
        T acc = T(0);
        for (int kx = 0; kx < k; ++kx) acc += w[kx] * p[kx];
        out[xo] += acc;
    }
    edge(r.interior_hi, r.any_hi);
}

// gin[xi] += sum_kx w[kx] * g[(xi + P - kx) / S]  (valid, stride-aligned taps)
template <int K, int S, class T>
inline void row_bwd_in(T* __restrict__ gin, const T* __restrict__ g,
                       const T* __restrict__ w, int k_rt, int s_rt, int P, int Xi,
                       int Xo) {
    const int k = K > 0 ? K : k_rt;
    const int s = S > 0 ? S : s_rt;
    if (s == 1) {
        const int ilo = std::min(Xi, std::max(0, k - 1 - P));
        const int ihi = std::max(ilo, std::min(Xi, Xo - P));
        auto edge = [&](int lo, int hi) {
            for (int xi = lo; xi < hi; ++xi) {
                T acc = T(0);
                for (int kx = 0; kx < k; ++kx) {
                    const int xo = xi + P - kx;
                    if (xo >= 0 && xo < Xo) acc += w[kx] * g[xo];
                }
                gin[xi] += acc;
            }
        };
        edge(0, ilo);
        for (int xi = ilo; xi < ihi; ++xi) {
            const T* q = g + xi + P - (k - 1);
            T acc = T(0);
            for (int kx = 0; kx < k; ++kx) acc += w[kx] * q[k - 1 - kx];
            gin[xi] += acc;
        }
        edge(ihi, Xi);
        return;
    }
    for (int xi = 0; xi < Xi; ++xi) {
        T acc = T(0);
        for (int kx = 0; kx < k; ++kx) {
            const int t = xi + P - kx;
            if (t < 0 || t % s != 0) continue;
            const int xo = t / s;
            if (xo < Xo) acc += w[kx] * g[xo];
        }
        gin[xi] += acc;
    }
}

// kacc[kx] += sum_xo g[xo] * in[xo*S + kx - P] over each tap's valid range
template <int K, int S, class T>
inline void row_grad_w(T* __restrict__ kacc, const T* __restrict__ g,
                       const T* __restrict__ in, int k_rt, int s_rt, int P,
                       const TapRanges& r) {
    const int k = K > 0 ? K : k_rt;
    const int s = S > 0 ? S : s_rt;
    for (int kx = 0; kx < k; ++kx) {
        const auto [lo, hi] = r.tap[static_cast<std::size_t>(kx)];
        const T* p = in + kx - P;
        T acc = T(0);
        if (s == 1) {
            for (int xo = lo; xo < hi; ++xo) acc += g[xo] * p[xo];
        } else {
            for (int xo = lo; xo < hi; ++xo) acc += g[xo] * p[xo * s];
        }
        kacc[kx] += acc;
    }
}

}  // namespace detail

// Direct 3D convolution. Weight layout: [out_ch][in_ch][kz][ky][kx].
// Accumulation order per output element is fixed, so results are
// bit-reproducible across runs.
template <class T>
class Conv3d {
public:
    Conv3d(int in_ch, int out_ch, int kernel, int stride, int pad)
        : weight(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel * kernel,
                 T(0)),
          bias(static_cast<std::size_t>(out_ch), T(0)),
          grad_weight(weight.size(), T(0)), grad_bias(bias.size(), T(0)),
          cin_(in_ch), cout_(out_ch), k_(kernel), stride_(stride), pad_(pad) {}

    int out_channels() const { return cout_; }
    int in_channels() const { return cin_; }

    Tensor<T> forward(const Tensor<T>& in) {
        if (in.c != cin_)
            throw ShapeError("Conv3d: expected " + std::to_string(cin_) +
                             " input channels, got " + std::to_string(in.c));
        cached_in_ = in;
        if (k_ == 3 && stride_ == 1) return forward_impl<3, 1>(in);
        if (k_ == 4 && stride_ == 2) return forward_impl<4, 2>(in);
        if (k_ == 4 && stride_ == 1) return forward_impl<4, 1>(in);
        return forward_impl<0, 0>(in);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (k_ == 3 && stride_ == 1) return backward_impl<3, 1>(grad_out);
        if (k_ == 4 && stride_ == 2) return backward_impl<4, 2>(grad_out);
        if (k_ == 4 && stride_ == 1) return backward_impl<4, 1>(grad_out);
        return backward_impl<0, 0>(grad_out);
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &weight, &grad_weight});
        out.push_back({prefix + ".bias", &bias, &grad_bias});
    }

    std::vector<T> weight, bias, grad_weight, grad_bias;

private:
    template <int K, int S>
    Tensor<T> forward_impl(const Tensor<T>& in) {
        Tensor<T> out(cout_, detail::conv_out_dim(in.z, k_, stride_, pad_),
                      detail::conv_out_dim(in.y, k_, stride_, pad_),
                      detail::conv_out_dim(in.x, k_, stride_, pad_));
        const detail::TapRanges xr(out.x, in.x, k_, stride_, pad_);
        for (int co = 0; co < cout_; ++co) {
            T* out_ch = out.channel(co);
            std::fill(out_ch, out_ch + out.spatial(),
                      bias[static_cast<std::size_t>(co)]);
            for (int kz = 0; kz < k_; ++kz) {
                const auto [zlo, zhi] =
                    detail::conv_range(out.z, in.z, kz, stride_, pad_);
                for (int ky = 0; ky < k_; ++ky) {
                    const auto [ylo, yhi] =
                        detail::conv_range(out.y, in.y, ky, stride_, pad_);
                    for (int zo = zlo; zo < zhi; ++zo) {
                        const int zi = zo * stride_ + kz - pad_;
                        for (int yo = ylo; yo < yhi; ++yo) {
                            const int yi = yo * stride_ + ky - pad_;
                            T* out_row =
                                out_ch +
                                (static_cast<std::size_t>(zo) * out.y + yo) * out.x;
                            for (int ci = 0; ci < cin_; ++ci) {
                                const T* in_row =
                                    in.channel(ci) +
                                    (static_cast<std::size_t>(zi) * in.y + yi) * in.x;
                                const T* w_k = kernel_at(co, ci) + (kz * k_ + ky) * k_;
                                detail::row_fwd<K, S>(out_row, in_row, w_k, k_,
                                                      stride_, pad_, in.x, xr);
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    template <int K, int S>
    Tensor<T> backward_impl(const Tensor<T>& grad_out) {
        const Tensor<T>& in = cached_in_;
        Tensor<T> grad_in = Tensor<T>::zeros_like(in);
        const detail::TapRanges xr(grad_out.x, in.x, k_, stride_, pad_);
        // dL/dbias and dL/dweight
        std::vector<T> kacc(static_cast<std::size_t>(k_));
        for (int co = 0; co < cout_; ++co) {
            const T* g_ch = grad_out.channel(co);
            T acc_b = T(0);
            for (std::size_t i = 0; i < grad_out.spatial(); ++i) acc_b += g_ch[i];
            grad_bias[static_cast<std::size_t>(co)] += acc_b;
            for (int ci = 0; ci < cin_; ++ci) {
                const T* in_ch = in.channel(ci);
                T* gw_base = grad_kernel_at(co, ci);
                for (int kz = 0; kz < k_; ++kz) {
                    const auto [zlo, zhi] =
                        detail::conv_range(grad_out.z, in.z, kz, stride_, pad_);
                    for (int ky = 0; ky < k_; ++ky) {
                        const auto [ylo, yhi] =
                            detail::conv_range(grad_out.y, in.y, ky, stride_, pad_);
                        std::fill(kacc.begin(), kacc.end(), T(0));
                        for (int zo = zlo; zo < zhi; ++zo) {
                            const int zi = zo * stride_ + kz - pad_;
                            for (int yo = ylo; yo < yhi; ++yo) {
                                const int yi = yo * stride_ + ky - pad_;
                                detail::row_grad_w<K, S>(
                                    kacc.data(),
                                    g_ch + (static_cast<std::size_t>(zo) *
                                                grad_out.y +
                                            yo) *
                                               grad_out.x,
                                    in_ch + (static_cast<std::size_t>(zi) * in.y +
                                             yi) *
                                                in.x,
                                    k_, stride_, pad_, xr);
                            }
                        }
                        for (int kx = 0; kx < k_; ++kx)
                            gw_base[(kz * k_ + ky) * k_ + kx] +=
                                kacc[static_cast<std::size_t>(kx)];
                    }
                }
            }
        }
        // dL/dinput
        for (int ci = 0; ci < cin_; ++ci) {
            T* gin_ch = grad_in.channel(ci);
            for (int kz = 0; kz < k_; ++kz) {
                const auto [zlo, zhi] =
                    detail::conv_range(grad_out.z, in.z, kz, stride_, pad_);
                for (int ky = 0; ky < k_; ++ky) {
                    const auto [ylo, yhi] =
                        detail::conv_range(grad_out.y, in.y, ky, stride_, pad_);
                    for (int zo = zlo; zo < zhi; ++zo) {
                        const int zi = zo * stride_ + kz - pad_;
                        for (int yo = ylo; yo < yhi; ++yo) {
                            const int yi = yo * stride_ + ky - pad_;
                            T* gin_row =
                                gin_ch +
                                (static_cast<std::size_t>(zi) * in.y + yi) * in.x;
                            for (int co = 0; co < cout_; ++co) {
                                const T* g_row =
                                    grad_out.channel(co) +
                                    (static_cast<std::size_t>(zo) * grad_out.y + yo) *
                                        grad_out.x;
                                const T* w_k = kernel_at(co, ci) + (kz * k_ + ky) * k_;
                                detail::row_bwd_in<K, S>(gin_row, g_row, w_k, k_,
                                                         stride_, pad_, in.x,
                                                         grad_out.x);
                            }
                        }
                    }
                }
            }
        }
        return grad_in;
    }

    T* kernel_at(int co, int ci) {
        return weight.data() +
               (static_cast<std::size_t>(co) * cin_ + ci) * k_ * k_ * k_;
    }
    T* grad_kernel_at(int co, int ci) {
        return grad_weight.data() +
               (static_cast<std::size_t>(co) * cin_ + ci) * k_ * k_ * k_;
    }

    int cin_, cout_, k_, stride_, pad_;
    Tensor<T> cached_in_;
};

// Per-channel normalization over the spatial extent (batch size 1).
template <class T>
class InstanceNorm3d {
public:
    explicit InstanceNorm3d(int channels)
        : gamma(static_cast<std::size_t>(channels), T(1)),
          beta(static_cast<std::size_t>(channels), T(0)),
          grad_gamma(gamma.size(), T(0)), grad_beta(beta.size(), T(0)) {}

    Tensor<T> forward(const Tensor<T>& in) {
        const std::size_t n = in.spatial();
        cached_xhat_ = Tensor<T>::zeros_like(in);
        inv_std_.assign(static_cast<std::size_t>(in.c), T(0));
        Tensor<T> out = Tensor<T>::zeros_like(in);
        for (int ci = 0; ci < in.c; ++ci) {
            const T* x = in.channel(ci);
            double sum = 0.0, sum2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sum += static_cast<double>(x[i]);
                sum2 += static_cast<double>(x[i]) * static_cast<double>(x[i]);
            }
            const double mean = sum / static_cast<double>(n);
            const double var =
                std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
            const T inv_std = static_cast<T>(1.0 / std::sqrt(var + kEps));
            inv_std_[static_cast<std::size_t>(ci)] = inv_std;
            const T mu = static_cast<T>(mean);
            const T g = gamma[static_cast<std::size_t>(ci)];
            const T b = beta[static_cast<std::size_t>(ci)];
            T* xh = cached_xhat_.channel(ci);
            T* o = out.channel(ci);
            for (std::size_t i = 0; i < n; ++i) {
                xh[i] = (x[i] - mu) * inv_std;
                o[i] = g * xh[i] + b;
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        const std::size_t n = cached_xhat_.spatial();
        Tensor<T> grad_in = Tensor<T>::zeros_like(grad_out);
        for (int ci = 0; ci < grad_out.c; ++ci) {
            const T* g = grad_out.channel(ci);
            const T* xh = cached_xhat_.channel(ci);
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sum_g += static_cast<double>(g[i]);
                sum_gx += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
            }
            grad_gamma[static_cast<std::size_t>(ci)] += static_cast<T>(sum_gx);
            grad_beta[static_cast<std::size_t>(ci)] += static_cast<T>(sum_g);
            const T mean_g = static_cast<T>(sum_g / static_cast<double>(n));
            const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(n));
            const T scale = gamma[static_cast<std::size_t>(ci)] *
                            inv_std_[static_cast<std::size_t>(ci)];
            T* gi = grad_in.channel(ci);
            for (std::size_t i = 0; i < n; ++i)
                gi[i] = scale * (g[i] - mean_g - xh[i] * mean_gx);
        }
        return grad_in;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
        out.push_back({prefix + ".beta", &beta, &grad_beta});
    }

    std::vector<T> gamma, beta, grad_gamma, grad_beta;

private:
    static constexpr double kEps = 1e-5;
    Tensor<T> cached_xhat_;
    std::vector<T> inv_std_;
};

template <class T>
class LeakyReLU {
public:
    explicit LeakyReLU(T negative_slope = T(0.2)) : slope_(negative_slope) {}

    Tensor<T> forward(const Tensor<T>& in) {
        cached_in_ = in;
        Tensor<T> out = in;
        for (T& v : out.data)
            if (v < T(0)) v *= slope_;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i)
            if (cached_in_.data[i] < T(0)) grad_in.data[i] *= slope_;
        return grad_in;
    }

    // Activation-region bits of the last forward pass. Finite-difference
    // verification uses these to reject intervals that straddle a kink.
    void append_region_signature(std::vector<std::uint8_t>& out) const {
        for (const T& v : cached_in_.data) out.push_back(v < T(0) ? 1 : 0);
    }

private:
    T slope_;
    Tensor<T> cached_in_;
};

template <class T>
class Sigmoid {
public:
    Tensor<T> forward(const Tensor<T>& in) {
        cached_out_ = in;
        for (T& v : cached_out_.data) v = T(1) / (T(1) + std::exp(-v));
        return cached_out_;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) {
            const T s = cached_out_.data[i];
            grad_in.data[i] *= s * (T(1) - s);
        }
        return grad_in;
    }

private:
    Tensor<T> cached_out_;
};

// Nearest-neighbour x2 upsampling.
template <class T>
class Upsample2x {
public:
    Tensor<T> forward(const Tensor<T>& in) {
        in_shape_ = {in.c, in.z, in.y, in.x};
        Tensor<T> out(in.c, in.z * 2, in.y * 2, in.x * 2);
        for (int ci = 0; ci < in.c; ++ci)
            for (int z = 0; z < out.z; ++z)
                for (int y = 0; y < out.y; ++y) {
                    const T* in_row = in.row(ci, z / 2, y / 2);
                    T* out_row = out.row(ci, z, y);
                    for (int x = 0; x < out.x; ++x) out_row[x] = in_row[x / 2];
                }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> grad_in(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        for (int ci = 0; ci < grad_out.c; ++ci)
            for (int z = 0; z < grad_out.z; ++z)
                for (int y = 0; y < grad_out.y; ++y) {
                    const T* g_row = grad_out.row(ci, z, y);
                    T* gi_row = grad_in.row(ci, z / 2, y / 2);
                    for (int x = 0; x < grad_out.x; ++x) gi_row[x / 2] += g_row[x];
                }
        return grad_in;
    }

private:
    std::array<int, 4> in_shape_{0, 0, 0, 0};
};

}  // namespace vbody::nn
