#include "vbody/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace vbody {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Trilinear sample at continuous voxel index; out-of-bounds corners
// contribute 0.
float sample_trilinear(const Volume& v, double cx, double cy, double cz) {
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int z0 = static_cast<int>(std::floor(cz));
    const double fx = cx - x0, fy = cy - y0, fz = cz - z0;

    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const int z = z0 + dz;
        if (z < 0 || z >= v.dims[2]) continue;
        const double wz = dz ? fz : 1.0 - fz;
        if (wz == 0.0) continue;
        for (int dy = 0; dy < 2; ++dy) {
            const int y = y0 + dy;
            if (y < 0 || y >= v.dims[1]) continue;
            const double wy = dy ? fy : 1.0 - fy;
            if (wy == 0.0) continue;
            for (int dx = 0; dx < 2; ++dx) {
                const int x = x0 + dx;
                if (x < 0 || x >= v.dims[0]) continue;
                const double wx = dx ? fx : 1.0 - fx;
                if (wx == 0.0) continue;
                acc += wz * wy * wx * v.at(x, y, z);
            }
        }
    }
    return static_cast<float>(acc);
}

void check_grid(const GridSpec& g) {
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 1)
            throw ParameterError("target grid: axis " + std::to_string(a) +
                                 " has dim < 1");
        if (!(g.spacing[a] > 0.0))
            throw ParameterError("target grid: axis " + std::to_string(a) +
                                 " has non-positive spacing");
    }
}

}  // namespace

RigidTransform RigidTransform::rotation_about(int axis, double degrees,
                                              Vec3 translation) {
    const double a = degrees * kPi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    RigidTransform t;
    t.translation = translation;
    const int u = (axis + 1) % 3, w = (axis + 2) % 3;
    t.rotation[u][u] = c;
    t.rotation[u][w] = -s;
    t.rotation[w][u] = s;
    t.rotation[w][w] = c;
    return t;
}

bool RigidTransform::is_orthonormal(double tol) const {
    // R * R^T == I and det(R) == +1.
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += rotation[i][k] * rotation[j][k];
            if (std::abs(dot - (i == j ? 1.0 : 0.0)) > tol) return false;
        }
    }
    const auto& r = rotation;
    const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                       r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                       r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    return std::abs(det - 1.0) <= tol;
}

Vec3 RigidTransform::apply(const Vec3& p) const {
    Vec3 out{};
    for (int i = 0; i < 3; ++i)
        out[i] = rotation[i][0] * p[0] + rotation[i][1] * p[1] +
                 rotation[i][2] * p[2] + translation[i];
    return out;
}

Vec3 RigidTransform::apply_inverse(const Vec3& p) const {
    // Inverse of a rigid transform: R^T (p - t).
    const Vec3 q{p[0] - translation[0], p[1] - translation[1], p[2] - translation[2]};
    Vec3 out{};
    for (int i = 0; i < 3; ++i)
        out[i] = rotation[0][i] * q[0] + rotation[1][i] * q[1] + rotation[2][i] * q[2];
    return out;
}

Volume resample_trilinear(const Volume& v, const GridSpec& target) {
    check_grid(target);
    Volume out = Volume::zeros(target.dims, v.modality, v.unit);
    out.spacing = target.spacing;
    out.origin = target.origin;
    for (int z = 0; z < target.dims[2]; ++z)
        for (int y = 0; y < target.dims[1]; ++y)
            for (int x = 0; x < target.dims[0]; ++x) {
                const double px = target.origin[0] + x * target.spacing[0];
                const double py = target.origin[1] + y * target.spacing[1];
                const double pz = target.origin[2] + z * target.spacing[2];
                out.at(x, y, z) = sample_trilinear(
                    v, (px - v.origin[0]) / v.spacing[0],
                    (py - v.origin[1]) / v.spacing[1],
                    (pz - v.origin[2]) / v.spacing[2]);
            }
    return out;
}

Volume apply_rigid(const Volume& v, const RigidTransform& t,
                   const GridSpec& reference_grid) {
    if (!t.is_orthonormal())
        throw ParameterError("rigid transform: rotation is not orthonormal "
                             "with determinant +1");
    check_grid(reference_grid);
    Volume out = Volume::zeros(reference_grid.dims, v.modality, v.unit);
    out.spacing = reference_grid.spacing;
    out.origin = reference_grid.origin;
    for (int z = 0; z < reference_grid.dims[2]; ++z)
        for (int y = 0; y < reference_grid.dims[1]; ++y)
            for (int x = 0; x < reference_grid.dims[0]; ++x) {
                const Vec3 p{reference_grid.origin[0] + x * reference_grid.spacing[0],
                             reference_grid.origin[1] + y * reference_grid.spacing[1],
                             reference_grid.origin[2] + z * reference_grid.spacing[2]};
                const Vec3 q = t.apply_inverse(p);
                out.at(x, y, z) = sample_trilinear(
                    v, (q[0] - v.origin[0]) / v.spacing[0],
                    (q[1] - v.origin[1]) / v.spacing[1],
                    (q[2] - v.origin[2]) / v.spacing[2]);
            }
    return out;
}

Volume suv_convert(const Volume& v, const SuvParams& p) {
    if (v.unit != IntensityUnit::BqPerMl)
        throw UnitError("suv_convert: input unit must be BQ_PER_ML, got " +
                        std::string(to_string(v.unit)));
    if (!(p.body_weight_kg > 0.0))
        throw ParameterError("suv_convert: body weight must be positive");
    if (!(p.injected_dose_bq > 0.0))
        throw ParameterError("suv_convert: injected dose must be positive");
    const double factor = p.body_weight_kg * 1000.0 / p.injected_dose_bq;
    Volume out = v;
    out.unit = IntensityUnit::Suv;
    for (float& x : out.data) x = static_cast<float>(x * factor);
    return out;
}

Volume clamp_normalize_pet(const Volume& v) {
    if (v.unit != IntensityUnit::Suv)
        throw UnitError("clamp_normalize_pet: input unit must be SUV, got " +
                        std::string(to_string(v.unit)));
    Volume out = v;
    out.unit = IntensityUnit::Normalized;
    for (float& x : out.data)
        x = static_cast<float>(
            std::clamp(static_cast<double>(x), 0.0, kSuvWindowMax) / kSuvWindowMax);
    return out;
}

Volume normalize_ct(const Volume& v) {
    if (v.unit != IntensityUnit::HU)
        throw UnitError("normalize_ct: input unit must be HU, got " +
                        std::string(to_string(v.unit)));
    Volume out = v;
    out.unit = IntensityUnit::Normalized;
    const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi <= lo) {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
        return out;
    }
    const double range = hi - lo;
    for (float& x : out.data) x = static_cast<float>((x - lo) / range);
    return out;
}

}  // namespace vbody
