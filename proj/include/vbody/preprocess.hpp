#pragma once

#include <array>

#include "vbody/volume.hpp"

namespace vbody {

struct RigidTransform {
    std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    Vec3 translation{0.0, 0.0, 0.0};

    static RigidTransform identity() { return {}; }
    // Rotation by `degrees` about one axis (0=x, 1=y, 2=z).
    static RigidTransform rotation_about(int axis, double degrees,
                                         Vec3 translation = {0, 0, 0});

    bool is_orthonormal(double tol = 1e-5) const;
    Vec3 apply(const Vec3& p) const;
    Vec3 apply_inverse(const Vec3& p) const;
};

struct SuvParams {
    double body_weight_kg = 0.0;
    double injected_dose_bq = 0.0;
};

// Target sampling grid for resampling operations.
struct GridSpec {
    Dims dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    static GridSpec of(const Volume& v) { return {v.dims, v.spacing, v.origin}; }
};

// Trilinear resampling onto the target grid; samples outside the source
// extent contribute 0.
Volume resample_trilinear(const Volume& v, const GridSpec& target);

// Samples v on reference_grid after mapping voxel centers through t^-1.
Volume apply_rigid(const Volume& v, const RigidTransform& t,
                   const GridSpec& reference_grid);

// Body-weight SUV with 1 g/mL density:
//   SUV(x) = c(x) * (weight_kg * 1000) / dose_bq
Volume suv_convert(const Volume& v, const SuvParams& p);

// output(x) = min(max(v(x), 0), 20) / 20
Volume clamp_normalize_pet(const Volume& v);
constexpr double kSuvWindowMax = 20.0;

// Per-volume min-max; constant volumes map to all zeros.
Volume normalize_ct(const Volume& v);

}  // namespace vbody
