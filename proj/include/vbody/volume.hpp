#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vbody/errors.hpp"

namespace vbody {

enum class Modality { CT, PET, SynthPet, Labels };
enum class IntensityUnit { HU, BqPerMl, Suv, Normalized, Label };
enum class Condition { Lymphoma, Nsclc, Melanoma, NegativeControl };
enum class Split { Train, Val, Test };

const char* to_string(Modality m);
const char* to_string(IntensityUnit u);
const char* to_string(Condition c);
const char* to_string(Split s);
Modality modality_from_string(const std::string& s);
IntensityUnit unit_from_string(const std::string& s);
Condition condition_from_string(const std::string& s);
Split split_from_string(const std::string& s);

using Dims = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

inline std::int64_t voxel_count(const Dims& d) {
    return static_cast<std::int64_t>(d[0]) * d[1] * d[2];
}

// 3D scalar grid, x-fastest storage: index = x + nx*(y + ny*z).
struct Volume {
    Dims dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    Modality modality = Modality::CT;
    IntensityUnit unit = IntensityUnit::HU;
    std::vector<float> data;

    static Volume zeros(Dims dims, Modality m = Modality::CT,
                        IntensityUnit u = IntensityUnit::HU);

    std::int64_t index(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(dims[0]) *
                       (y + static_cast<std::int64_t>(dims[1]) * z);
    }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }
    std::int64_t size() const { return voxel_count(dims); }
    bool same_grid(const Volume& o) const { return dims == o.dims; }

    // Checks data length and the unit invariants (NORMALIZED in [0,1],
    // SUV >= 0). Throws FormatError naming the offending property.
    void validate() const;
};

// Voxel-wise district labels over {0..4}; 0 = background,
// 1 = head, 2 = trunk, 3 = arms, 4 = legs.
struct DistrictLabelMask {
    Dims dims{1, 1, 1};
    std::vector<std::uint8_t> labels;

    std::int64_t index(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(dims[0]) *
                       (y + static_cast<std::int64_t>(dims[1]) * z);
    }
    std::int64_t size() const { return voxel_count(dims); }
};

constexpr int kNumDistricts = 4;
constexpr int kWholeBody = 0;  // sentinel district id

const char* district_name(int district_id);  // "whole_body", "head", ...
int district_from_name(const std::string& name);

struct BinaryMask {
    Dims dims{1, 1, 1};
    std::vector<std::uint8_t> indicator;
    int district_id = kWholeBody;

    std::int64_t index(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(dims[0]) *
                       (y + static_cast<std::int64_t>(dims[1]) * z);
    }
    std::int64_t size() const { return voxel_count(dims); }
    std::int64_t count_set() const;
};

struct PatientRecord {
    std::string patient_id;
    Volume ct;
    std::optional<Volume> pet;
    DistrictLabelMask district_mask;
    std::optional<BinaryMask> lesion_mask;
    Condition condition = Condition::NegativeControl;
    double body_weight_kg = 70.0;
    double injected_dose_bq = 3.5e8;
    Split split = Split::Train;
};

// output(p) = v(p) * m(p); metadata copied from v.
Volume mask_apply(const Volume& v, const BinaryMask& m);

// output(p) = src(p) where m(p) = 1, else dst(p).
Volume volume_union_overwrite(const Volume& dst, const Volume& src,
                              const BinaryMask& m);

// Union of the four district masks (labels != 0).
BinaryMask body_mask(const DistrictLabelMask& m);

// Native .vvol format: JSON header at `path`, raw little-endian float32
// payload at `path + ".raw"`. Round trips are bit-exact.
void write_volume(const Volume& v, const std::string& path);
Volume read_volume(const std::string& path);

// Masks persist through the same format (modality LABELS, unit LABEL).
Volume mask_to_volume(const DistrictLabelMask& m);
Volume mask_to_volume(const BinaryMask& m);
DistrictLabelMask district_mask_from_volume(const Volume& v);
BinaryMask binary_mask_from_volume(const Volume& v, int district_id);

// One-way NIfTI-1 importer (uncompressed .nii). Honors dim, pixdim,
// scl_slope/scl_inter, datatypes float32 and int16.
Volume import_nifti(const std::string& path, Modality modality,
                    IntensityUnit unit);

}  // namespace vbody
