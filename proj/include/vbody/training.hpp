#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vbody/models.hpp"
#include "vbody/patches.hpp"
#include "vbody/volume.hpp"

namespace vbody {

struct AugmentOptions {
    bool rotate = true;
    double max_rotation_deg = 10.0;
    bool flips = true;
    double noise_sigma = 0.01;  // CT only
};

struct TrainConfig {
    int total_epochs = 150;
    int decay_start_epoch = 101;
    double lr_initial = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch_size = 1;
    double grad_clip_max_norm = 5.0;
    double lambda_l1 = kLambdaL1;
    int patches_per_epoch = 0;  // 0 -> 64 * training patients
    double min_in_district_fraction = 0.05;
    int val_interval_epochs = 10;
    std::uint64_t seed = 17;
    AugmentOptions augment;
    int patch_size = kDefaultPatchSize;
    int overlap = kDefaultOverlap;
    int base_channels = 16;
    int depth = 3;
    int disc_levels = 3;
    int disc_base_channels = 16;

    void validate() const;
    nn::GeneratorConfig generator_config() const;
};

// alpha up to the decay start, then linear to zero at the final epoch.
double lr_at(int epoch, const TrainConfig& c);

// One jointly-sampled transform: per-axis rotations (trilinear for
// intensities, nearest for the mask), independent flips per plane, then
// Gaussian noise on the CT patch only, clamped to [0, 1].
void augment_pair(std::vector<float>& ct, std::vector<float>& pet,
                  std::vector<std::uint8_t>& mask, int size,
                  const AugmentOptions& opts, std::uint64_t seed);

// Axis flip helper used by the augmentation (axis 0 = x, 1 = y, 2 = z).
void flip_patch(std::vector<float>& values, int size, int axis);
void flip_patch(std::vector<std::uint8_t>& values, int size, int axis);

// One patient prepared for a training scope: district-masked (or whole-body)
// volumes padded to the patch size.
struct ScopedPatient {
    std::string patient_id;
    DistrictBundle bundle;  // ct/pet/mask, padded
    PadRecord pad;
};

struct TrainingSet {
    int scope = kWholeBody;
    std::vector<ScopedPatient> train;
    std::vector<ScopedPatient> val;
};

// scope = district id for the proposed pipeline, kWholeBody for the
// competitor (unsegmented volumes, body mask for sampling/validation).
TrainingSet build_training_set(const std::vector<PatientRecord>& patients,
                               int scope, int patch_size);

struct TrainLogRow {
    int epoch = 0;
    int step = 0;  // global step
    double loss_g = 0.0;
    double loss_d = 0.0;
    double l1 = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;  // post-clip, generator group
};

struct TrainResult {
    ModelBundle model;  // final epoch
    std::vector<TrainLogRow> log;
    std::vector<std::pair<int, double>> val_history;  // (epoch, mae)
    double best_val_mae = 0.0;
    int best_epoch = 0;
    int steps_g = 0;
    int steps_d = 0;
    std::string log_path;       // empty when out_dir empty
    std::string best_ckpt_path;
    std::string final_ckpt_path;
};

// Full training loop: Adam with the configured betas, per-step gradient
// clipping, per-step CSV log, validation MAE every val_interval_epochs,
// best + final checkpoints. Deterministic given c.seed.
// When `resume` is set, continues from its epoch counter.
TrainResult train_model(int scope, Arch arch, const TrainingSet& data,
                        const TrainConfig& c, const std::string& out_dir,
                        ModelBundle* resume = nullptr);

}  // namespace vbody
