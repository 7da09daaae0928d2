#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vbody/volume.hpp"

namespace vbody {

// District-specific CT -> PET transfer: clamp01(scale * ct^power + offset).
struct DistrictTransfer {
    double scale = 1.0;
    double power = 1.0;
    double offset = 0.0;

    double apply(double ct) const;
};

struct PhantomConfig {
    Dims dims{64, 64, 160};
    // head, trunk, arms, legs. Mutually inconsistent by default so a single
    // global map cannot fit all districts.
    std::array<DistrictTransfer, 4> transfers{
        DistrictTransfer{0.8, 1.0, 0.1},   // head
        DistrictTransfer{1.0, 2.0, 0.0},   // trunk
        DistrictTransfer{0.5, 1.0, 0.0},   // arms
        DistrictTransfer{0.3, 1.0, 0.15},  // legs
    };
    std::array<double, 4> district_ct_base{0.5, 0.45, 0.4, 0.42};
    double texture_amplitude = 0.12;
    double ct_noise_sigma = 0.02;
    double pet_noise_sigma = 0.01;
    int lesion_count_min = 0;
    int lesion_count_max = 3;
    double lesion_radius_min = 2.5;  // voxels
    double lesion_radius_max = 4.5;
    double lesion_uptake_boost = 0.3;
    double lesion_ct_base = 0.8;
    std::uint64_t seed = 1;

    void validate() const;
};

// Deterministic given (config.seed, patient_index). Builds a stylized body
// from a head sphere, trunk ellipsoid, arm and leg cylinders; emits the
// district label mask by construction, CT/PET per the transfer functions,
// and the lesion mask.
PatientRecord generate_phantom(const PhantomConfig& c, int patient_index);

// Split fractions applied as: val = floor(f_val*n), test = floor(f_test*n),
// train = remainder; assignment stratified by condition.
struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

std::vector<PatientRecord> phantom_dataset_records(const PhantomConfig& c,
                                                   int n_patients,
                                                   SplitFractions fractions = {});

// The analytic PET a lesion-blind observer would predict from CT: the
// district transfer applied voxel-wise, zero on background. The noiseless,
// lesion-free oracle for trained models.
Volume analytic_transfer_prediction(const PhantomConfig& c, const PatientRecord& p);

}  // namespace vbody
