#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vbody/nn/adam.hpp"
#include "vbody/nn/losses.hpp"
#include "vbody/nn/networks.hpp"
#include "vbody/volume.hpp"

namespace vbody {

enum class Arch { Pix2Pix, CycleGan };

const char* to_string(Arch a);
Arch arch_from_string(const std::string& s);

constexpr double kLambdaL1 = 100.0;   // Pix2Pix adversarial/L1 balance
constexpr double kLambdaCycle = 10.0; // CycleGAN cycle-consistency weight

// One generator/discriminator set: G and D for Pix2Pix; G, F, D_X, D_Y
// for CycleGAN. scope = district id 1..4 or kWholeBody.
struct ModelBundle {
    Arch arch = Arch::Pix2Pix;
    int scope = kWholeBody;
    nn::GeneratorConfig gen_cfg;
    nn::DiscriminatorConfig disc_cfg;
    int epoch = 0;
    std::uint64_t seed = 0;

    std::unique_ptr<nn::UNetGenerator3d<float>> g;        // X -> Y
    std::unique_ptr<nn::UNetGenerator3d<float>> f;        // Y -> X (CycleGAN)
    std::unique_ptr<nn::PatchGanDiscriminator3d<float>> d;    // D, or D_Y
    std::unique_ptr<nn::PatchGanDiscriminator3d<float>> d_x;  // CycleGAN only

    std::vector<nn::ParamRef<float>> all_params() const;
    std::uint64_t config_hash() const;
};

// Builds the networks for the requested architecture and initializes all
// parameters deterministically from `seed`.
ModelBundle make_model_bundle(Arch arch, int scope, const nn::GeneratorConfig& gcfg,
                              int disc_levels, int disc_base_channels,
                              std::uint64_t seed);

// Applies G to one s^3 patch. Output values lie in [0, 1].
std::vector<float> generator_forward(const ModelBundle& m,
                                     const std::vector<float>& patch);

nn::Tensor<float> patch_to_tensor(const std::vector<float>& patch, int size);
std::vector<float> tensor_to_patch(const nn::Tensor<float>& t);

struct Pix2PixLosses {
    double loss_g = 0.0;
    double loss_d = 0.0;
    double l1_term = 0.0;
    double adv_term = 0.0;
};

// loss_G = BCE(D(x, G(x)) -> real) + lambda * mean|G(x) - y|, lambda = 100.
// loss_D = 0.5 * [BCE(D(x, y) -> real) + BCE(D(x, G(x)) -> fake)].
Pix2PixLosses pix2pix_losses(ModelBundle& m, const nn::Tensor<float>& x,
                             const nn::Tensor<float>& y);

struct CycleGanLosses {
    double loss_g_total = 0.0;  // adv_g + adv_f + lambda_cyc * cycle_term
    double adv_g = 0.0;
    double adv_f = 0.0;
    double cycle_term = 0.0;
    double loss_d_x = 0.0;
    double loss_d_y = 0.0;
};

CycleGanLosses cyclegan_losses(ModelBundle& m, const nn::Tensor<float>& x,
                               const nn::Tensor<float>& y);

// Versioned binary checkpoint; round trips are bit-exact. Loading verifies
// the stored config hash against the rebuilt configuration.
void save_checkpoint(const ModelBundle& m, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace vbody
