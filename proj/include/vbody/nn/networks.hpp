#pragma once

#include <memory>
#include <random>
#include <vector>

#include "vbody/nn/layers.hpp"

namespace vbody::nn {

struct GeneratorConfig {
    int in_channels = 1;
    int out_channels = 1;
    int base_channels = 16;  // toy preset; 32 for the standard preset
    int depth = 3;           // encoder-decoder levels
    int patch_size = 32;

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || base_channels < 1 || depth < 1)
            throw ParameterError("generator config: channel/depth values must be >= 1");
        if ((1 << depth) > patch_size)
            throw ParameterError("generator config: 2^depth must not exceed patch size");
        if (patch_size % (1 << depth) != 0)
            throw ParameterError(
                "generator config: patch size must be divisible by 2^depth");
    }
};

struct DiscriminatorConfig {
    int in_channels = 2;  // CT||PET for paired mode, 1 for unpaired
    int levels = 3;
    int base_channels = 16;

    void validate() const {
        if (in_channels < 1 || levels < 1 || base_channels < 1)
            throw ParameterError("discriminator config: values must be >= 1");
    }
};

// Encoder-decoder with skip connections: stride-2 convolutions down,
// nearest-neighbour upsampling + convolution up, instance norm, sigmoid
// output bounded to [0, 1].
template <class T>
class UNetGenerator3d {
public:
    explicit UNetGenerator3d(const GeneratorConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        const int d = cfg.depth;
        int ch = cfg.in_channels;
        for (int i = 0; i < d; ++i) {
            const int out_ch = cfg.base_channels << i;
            down_convs_.emplace_back(ch, out_ch, 4, 2, 1);
            if (i > 0) down_norms_.emplace_back(out_ch);
            down_acts_.emplace_back(T(0.2));
            ch = out_ch;
        }
        for (int t = 1; t < d; ++t) {
            const int out_ch = cfg.base_channels << (d - t - 1);
            up_convs_.emplace_back(ch, out_ch, 3, 1, 1);
            up_norms_.emplace_back(out_ch);
            up_acts_.emplace_back(T(0));  // plain ReLU
            ch = out_ch * 2;              // after skip concatenation
        }
        up_samples_.resize(static_cast<std::size_t>(d - 1));
        final_conv_ = std::make_unique<Conv3d<T>>(ch, cfg.out_channels, 3, 1, 1);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != cfg_.in_channels || x.z != cfg_.patch_size ||
            x.y != cfg_.patch_size || x.x != cfg_.patch_size)
            throw ShapeError("generator: expected input (" +
                             std::to_string(cfg_.in_channels) + ", s, s, s) with s = " +
                             std::to_string(cfg_.patch_size) + ", got " +
                             x.shape_string());
        const int d = cfg_.depth;
        down_out_.assign(static_cast<std::size_t>(d), Tensor<T>{});
        Tensor<T> cur = x;
        for (int i = 0; i < d; ++i) {
            cur = down_convs_[static_cast<std::size_t>(i)].forward(cur);
            if (i > 0) cur = down_norms_[static_cast<std::size_t>(i - 1)].forward(cur);
            cur = down_acts_[static_cast<std::size_t>(i)].forward(cur);
            down_out_[static_cast<std::size_t>(i)] = cur;
        }
        up_split_.assign(static_cast<std::size_t>(d - 1), 0);
        for (int t = 1; t < d; ++t) {
            cur = up_samples_[static_cast<std::size_t>(t - 1)].forward(cur);
            cur = up_convs_[static_cast<std::size_t>(t - 1)].forward(cur);
            cur = up_norms_[static_cast<std::size_t>(t - 1)].forward(cur);
            cur = up_acts_[static_cast<std::size_t>(t - 1)].forward(cur);
            up_split_[static_cast<std::size_t>(t - 1)] = cur.c;
            cur = concat_channels(cur, down_out_[static_cast<std::size_t>(d - 1 - t)]);
        }
        cur = final_upsample_.forward(cur);
        cur = final_conv_->forward(cur);
        return output_act_.forward(cur);
    }

    // Accumulates parameter gradients; grad_out is dL/d(output). Returns
    // dL/d(input) so composed paths (cycle losses) can keep propagating.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        const int d = cfg_.depth;
        Tensor<T> g = output_act_.backward(grad_out);
        g = final_conv_->backward(g);
        g = final_upsample_.backward(g);
        std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(d));
        for (int t = d - 1; t >= 1; --t) {
            auto [g_up, g_skip] =
                split_channels(g, up_split_[static_cast<std::size_t>(t - 1)]);
            skip_grads[static_cast<std::size_t>(d - 1 - t)] = std::move(g_skip);
            g = up_acts_[static_cast<std::size_t>(t - 1)].backward(g_up);
            g = up_norms_[static_cast<std::size_t>(t - 1)].backward(g);
            g = up_convs_[static_cast<std::size_t>(t - 1)].backward(g);
            g = up_samples_[static_cast<std::size_t>(t - 1)].backward(g);
        }
        for (int i = d - 1; i >= 0; --i) {
            Tensor<T>& extra = skip_grads[static_cast<std::size_t>(i)];
            if (extra.size() > 0)
                for (std::size_t j = 0; j < g.data.size(); ++j)
                    g.data[j] += extra.data[j];
            g = down_acts_[static_cast<std::size_t>(i)].backward(g);
            if (i > 0) g = down_norms_[static_cast<std::size_t>(i - 1)].backward(g);
            g = down_convs_[static_cast<std::size_t>(i)].backward(g);
        }
        return g;
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < down_convs_.size(); ++i)
            down_convs_[i].collect_params("down" + std::to_string(i) + ".conv", out);
        for (std::size_t i = 0; i < down_norms_.size(); ++i)
            down_norms_[i].collect_params("down" + std::to_string(i + 1) + ".norm", out);
        for (std::size_t i = 0; i < up_convs_.size(); ++i)
            up_convs_[i].collect_params("up" + std::to_string(i) + ".conv", out);
        for (std::size_t i = 0; i < up_norms_.size(); ++i)
            up_norms_[i].collect_params("up" + std::to_string(i) + ".norm", out);
        final_conv_->collect_params("final.conv", out);
        return out;
    }

    void zero_grad() {
        for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), T(0));
    }

    // Piecewise-linear region of the last forward pass.
    std::vector<std::uint8_t> activation_signature() const {
        std::vector<std::uint8_t> out;
        for (const auto& a : down_acts_) a.append_region_signature(out);
        for (const auto& a : up_acts_) a.append_region_signature(out);
        return out;
    }

    const GeneratorConfig& config() const { return cfg_; }

private:
    GeneratorConfig cfg_;
    std::vector<Conv3d<T>> down_convs_;
    std::vector<InstanceNorm3d<T>> down_norms_;
    std::vector<LeakyReLU<T>> down_acts_;
    std::vector<Conv3d<T>> up_convs_;
    std::vector<InstanceNorm3d<T>> up_norms_;
    std::vector<LeakyReLU<T>> up_acts_;
    std::vector<Upsample2x<T>> up_samples_;
    Upsample2x<T> final_upsample_;
    std::unique_ptr<Conv3d<T>> final_conv_;
    Sigmoid<T> output_act_;

    std::vector<Tensor<T>> down_out_;
    std::vector<int> up_split_;
};

// PatchGAN: stride-2 convolution stack emitting a 3D grid of patch-level
// real/fake scores. Raw outputs; losses apply sigmoid (Pix2Pix) or use the
// raw score directly (least-squares).
template <class T>
class PatchGanDiscriminator3d {
public:
    explicit PatchGanDiscriminator3d(const DiscriminatorConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        int ch = cfg.in_channels;
        for (int i = 0; i < cfg.levels; ++i) {
            const int out_ch = cfg.base_channels << i;
            convs_.emplace_back(ch, out_ch, 4, 2, 1);
            if (i > 0) norms_.emplace_back(out_ch);
            acts_.emplace_back(T(0.2));
            ch = out_ch;
        }
        final_conv_ = std::make_unique<Conv3d<T>>(ch, 1, 4, 1, 1);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            cur = convs_[i].forward(cur);
            if (i > 0) cur = norms_[i - 1].forward(cur);
            cur = acts_[i].forward(cur);
        }
        return final_conv_->forward(cur);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> g = final_conv_->backward(grad_out);
        for (std::size_t i = convs_.size(); i-- > 0;) {
            g = acts_[i].backward(g);
            if (i > 0) g = norms_[i - 1].backward(g);
            g = convs_[i].backward(g);
        }
        return g;
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < convs_.size(); ++i)
            convs_[i].collect_params("disc" + std::to_string(i) + ".conv", out);
        for (std::size_t i = 0; i < norms_.size(); ++i)
            norms_[i].collect_params("disc" + std::to_string(i + 1) + ".norm", out);
        final_conv_->collect_params("disc_final.conv", out);
        return out;
    }

    void zero_grad() {
        for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), T(0));
    }

    std::vector<std::uint8_t> activation_signature() const {
        std::vector<std::uint8_t> out;
        for (const auto& a : acts_) a.append_region_signature(out);
        return out;
    }

    const DiscriminatorConfig& config() const { return cfg_; }

private:
    DiscriminatorConfig cfg_;
    std::vector<Conv3d<T>> convs_;
    std::vector<InstanceNorm3d<T>> norms_;
    std::vector<LeakyReLU<T>> acts_;
    std::unique_ptr<Conv3d<T>> final_conv_;
};

// Fills conv weights with N(0, 0.02) draws, biases and norm betas with 0,
// norm gammas with 1, in declaration order. Deterministic given seed.
template <class T>
void init_params(std::vector<ParamRef<T>> params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (auto& p : params) {
        const bool is_weight = p.name.size() >= 7 &&
                               p.name.compare(p.name.size() - 7, 7, ".weight") == 0;
        const bool is_gamma = p.name.size() >= 6 &&
                              p.name.compare(p.name.size() - 6, 6, ".gamma") == 0;
        for (T& v : *p.value) {
            if (is_weight)
                v = static_cast<T>(dist(rng));
            else
                v = is_gamma ? T(1) : T(0);
        }
        std::fill(p.grad->begin(), p.grad->end(), T(0));
    }
}

}  // namespace vbody::nn
