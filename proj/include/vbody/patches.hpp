#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vbody/districts.hpp"
#include "vbody/volume.hpp"

namespace vbody {

constexpr int kDefaultPatchSize = 32;
constexpr int kDefaultOverlap = 16;

struct PatchGrid {
    Dims dims{1, 1, 1};
    int patch_size = kDefaultPatchSize;
    int overlap = kDefaultOverlap;
    std::vector<std::array<int, 3>> starts;
};

// Per axis: starts {0, s-o, 2(s-o), ...} while start + s <= dim, plus the
// clamped final start (dim - s) if the tail would otherwise be uncovered.
PatchGrid patch_grid(Dims dims, int patch_size = kDefaultPatchSize,
                     int overlap = kDefaultOverlap);

struct PatchPair {
    std::vector<float> ct;    // s^3, x-fastest
    std::vector<float> pet;   // s^3
    std::vector<std::uint8_t> mask;  // s^3 in-district indicator
    std::array<int, 3> origin{0, 0, 0};
    int district_id = 0;
    int size = kDefaultPatchSize;
};

// `count` pairs at uniformly random valid origins with at least
// `min_in_district_fraction` of in-mask voxels; deterministic given seed.
// Gives up after 10,000 rejected draws.
std::vector<PatchPair> sample_training_patches(const DistrictBundle& b, int count,
                                               double min_in_district_fraction,
                                               std::uint64_t seed,
                                               int patch_size = kDefaultPatchSize);

// Rectangular box of values to be placed at `origin` during stitching.
struct StitchPatch {
    std::vector<float> values;
    std::array<int, 3> origin{0, 0, 0};
    Dims extent{1, 1, 1};
};

// output(v) = sum of covering patch values / coverage count (plain average).
// Accumulates in 64-bit; errors if any voxel is uncovered.
Volume stitch(const std::vector<StitchPatch>& patches, Dims dims);

// Whole-body assembly: output(v) = district_i value where mask_i(v) = 1,
// 0 on background. Masks must form a valid partition.
Volume assemble(const std::vector<std::pair<Volume, BinaryMask>>& districts,
                Dims dims);

struct PadRecord {
    Dims original_dims{1, 1, 1};
    std::array<int, 3> lead{0, 0, 0};
    std::array<int, 3> trail{0, 0, 0};
    bool padded() const { return lead != std::array<int, 3>{0, 0, 0} ||
                                 trail != std::array<int, 3>{0, 0, 0}; }
};

// Zero-pads each axis to >= min_size, symmetric-as-possible
// (extra voxel goes to the trailing side).
std::pair<Volume, PadRecord> pad_to_min(const Volume& v, int min_size);
std::pair<BinaryMask, PadRecord> pad_to_min(const BinaryMask& m, int min_size);
Volume unpad(const Volume& v, const PadRecord& rec);

// Extracts the s^3 region at `origin` from a volume (no bounds padding).
std::vector<float> cut_patch(const Volume& v, std::array<int, 3> origin, int size);
std::vector<std::uint8_t> cut_patch(const BinaryMask& m, std::array<int, 3> origin,
                                    int size);

}  // namespace vbody
