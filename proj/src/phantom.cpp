#include "vbody/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vbody {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Proportional body geometry, z up: legs at the bottom, head at the top.
struct BodyGeometry {
    double cx, cy;
    double head_cz, head_r;
    double trunk_cz, trunk_rx, trunk_ry, trunk_rz;
    double arms_zlo, arms_zhi, arm_r, arm_x_left, arm_x_right;
    double legs_zlo, legs_zhi, leg_r, leg_x_left, leg_x_right;

    explicit BodyGeometry(const Dims& d) {
        const double nx = d[0], ny = d[1], nz = d[2];
        cx = 0.5 * nx;
        cy = 0.5 * ny;
        legs_zlo = 0.05 * nz;
        legs_zhi = 0.45 * nz;
        trunk_cz = 0.625 * nz;
        trunk_rz = 0.175 * nz;   // trunk spans [0.45, 0.80) * nz
        trunk_rx = 0.30 * nx;
        trunk_ry = 0.22 * ny;
        arms_zlo = 0.48 * nz;
        arms_zhi = 0.78 * nz;
        arm_r = 0.09 * nx;
        arm_x_left = 0.10 * nx;
        arm_x_right = 0.90 * nx;
        head_cz = 0.885 * nz;
        head_r = std::min({0.18 * nx, 0.18 * ny, 0.085 * nz});
        leg_r = 0.10 * nx;
        leg_x_left = 0.35 * nx;
        leg_x_right = 0.65 * nx;
    }

    // Priority head > trunk > arms > legs resolves any overlap.
    int district_of(double x, double y, double z) const {
        const double hx = x - cx, hy = y - cy, hz = z - head_cz;
        if (hx * hx + hy * hy + hz * hz <= head_r * head_r) return 1;
        const double tx = (x - cx) / trunk_rx, ty = (y - cy) / trunk_ry,
                     tz = (z - trunk_cz) / trunk_rz;
        if (tx * tx + ty * ty + tz * tz <= 1.0) return 2;
        if (z >= arms_zlo && z < arms_zhi) {
            const double dl = (x - arm_x_left) * (x - arm_x_left) +
                              (y - cy) * (y - cy);
            const double dr = (x - arm_x_right) * (x - arm_x_right) +
                              (y - cy) * (y - cy);
            if (dl <= arm_r * arm_r || dr <= arm_r * arm_r) return 3;
        }
        if (z >= legs_zlo && z < legs_zhi) {
            const double dl = (x - leg_x_left) * (x - leg_x_left) +
                              (y - cy) * (y - cy);
            const double dr = (x - leg_x_right) * (x - leg_x_right) +
                              (y - cy) * (y - cy);
            if (dl <= leg_r * leg_r || dr <= leg_r * leg_r) return 4;
        }
        return 0;
    }
};

struct Lesion {
    double x, y, z, r;
};

}  // namespace

double DistrictTransfer::apply(double ct) const {
    const double v = scale * std::pow(ct, power) + offset;
    return std::clamp(v, 0.0, 1.0);
}

void PhantomConfig::validate() const {
    for (int a = 0; a < 3; ++a)
        if (dims[a] < 32)
            throw ConfigError("phantom dims: axis " + std::to_string(a) +
                              " must be >= 32 voxels");
    if (dims[2] < 64)
        throw ConfigError("phantom dims: z extent must be >= 64 voxels to stack "
                          "the four districts");
    if (ct_noise_sigma < 0.0 || pet_noise_sigma < 0.0)
        throw ConfigError("phantom noise sigma must be >= 0");
    if (lesion_count_min < 0 || lesion_count_max < lesion_count_min)
        throw ConfigError("phantom lesion count range is invalid");
    if (lesion_radius_min <= 0.0 || lesion_radius_max < lesion_radius_min)
        throw ConfigError("phantom lesion radius range is invalid");
    if (texture_amplitude < 0.0)
        throw ConfigError("phantom texture amplitude must be >= 0");
    for (const auto& t : transfers) {
        // Transfer must keep [0,1] inside [0,1] at the endpoints.
        if (t.apply(0.0) < 0.0 || t.apply(1.0) > 1.0)
            throw ConfigError("phantom transfer leaves [0, 1]");
    }
}

PatientRecord generate_phantom(const PhantomConfig& c, int patient_index) {
    c.validate();
    std::mt19937_64 rng(splitmix64(c.seed * 0x9e3779b97f4a7c15ull +
                                   static_cast<std::uint64_t>(patient_index)));
    const BodyGeometry geo(c.dims);

    // Lesions sit fully inside the trunk ellipsoid.
    std::uniform_int_distribution<int> lesion_count_dist(c.lesion_count_min,
                                                         c.lesion_count_max);
    const int lesion_count = lesion_count_dist(rng);
    std::vector<Lesion> lesions;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> radius_dist(c.lesion_radius_min,
                                                       c.lesion_radius_max);
    for (int i = 0; i < lesion_count; ++i) {
        const double r = radius_dist(rng);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double ux = 2.0 * unit(rng) - 1.0;
            const double uy = 2.0 * unit(rng) - 1.0;
            const double uz = 2.0 * unit(rng) - 1.0;
            const double x = geo.cx + ux * geo.trunk_rx;
            const double y = geo.cy + uy * geo.trunk_ry;
            const double z = geo.trunk_cz + uz * geo.trunk_rz;
            // Shrink the ellipsoid by the lesion radius so the sphere fits.
            const double sx = (x - geo.cx) / (geo.trunk_rx - r);
            const double sy = (y - geo.cy) / (geo.trunk_ry - r);
            const double sz = (z - geo.trunk_cz) / (geo.trunk_rz - r);
            if (geo.trunk_rx > r && geo.trunk_ry > r && geo.trunk_rz > r &&
                sx * sx + sy * sy + sz * sz <= 1.0) {
                lesions.push_back({x, y, z, r});
                break;
            }
        }
    }

    // Smooth texture: three axis-aligned sinusoids with random phase.
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    const double ph_x = phase(rng), ph_y = phase(rng), ph_z = phase(rng);
    const double fx = kTwoPi * 2.0 / c.dims[0];
    const double fy = kTwoPi * 3.0 / c.dims[1];
    const double fz = kTwoPi * 5.0 / c.dims[2];

    PatientRecord p;
    char id[32];
    std::snprintf(id, sizeof(id), "phantom_%04d", patient_index);
    p.patient_id = id;
    p.ct = Volume::zeros(c.dims, Modality::CT, IntensityUnit::Normalized);
    Volume pet = Volume::zeros(c.dims, Modality::PET, IntensityUnit::Normalized);
    p.district_mask.dims = c.dims;
    p.district_mask.labels.assign(static_cast<std::size_t>(voxel_count(c.dims)), 0);
    BinaryMask lesion_mask;
    lesion_mask.dims = c.dims;
    lesion_mask.district_id = kWholeBody;
    lesion_mask.indicator.assign(p.district_mask.labels.size(), 0);

    std::normal_distribution<double> noise(0.0, 1.0);
    for (int z = 0; z < c.dims[2]; ++z)
        for (int y = 0; y < c.dims[1]; ++y)
            for (int x = 0; x < c.dims[0]; ++x) {
                const int d = geo.district_of(x, y, z);
                if (d == 0) continue;
                const std::size_t idx = static_cast<std::size_t>(p.ct.index(x, y, z));
                p.district_mask.labels[idx] = static_cast<std::uint8_t>(d);

                bool in_lesion = false;
                for (const Lesion& l : lesions) {
                    const double dx = x - l.x, dy = y - l.y, dz = z - l.z;
                    if (dx * dx + dy * dy + dz * dz <= l.r * l.r) {
                        in_lesion = true;
                        break;
                    }
                }
                if (in_lesion) lesion_mask.indicator[idx] = 1;

                double ct;
                if (in_lesion) {
                    ct = c.lesion_ct_base + c.ct_noise_sigma * noise(rng);
                } else {
                    const double texture =
                        c.texture_amplitude *
                        (std::sin(fx * x + ph_x) + std::sin(fy * y + ph_y) +
                         std::sin(fz * z + ph_z)) /
                        3.0;
                    ct = c.district_ct_base[static_cast<std::size_t>(d - 1)] +
                         texture + c.ct_noise_sigma * noise(rng);
                }
                ct = std::clamp(ct, 0.0, 1.0);
                p.ct.data[idx] = static_cast<float>(ct);

                double uptake =
                    c.transfers[static_cast<std::size_t>(d - 1)].apply(
                        static_cast<double>(p.ct.data[idx]));
                if (in_lesion) uptake += c.lesion_uptake_boost;
                if (c.pet_noise_sigma > 0.0)
                    uptake += c.pet_noise_sigma * noise(rng);
                pet.data[idx] = static_cast<float>(std::clamp(uptake, 0.0, 1.0));
            }

    p.pet = std::move(pet);
    p.lesion_mask = std::move(lesion_mask);
    p.condition = lesions.empty()
                      ? Condition::NegativeControl
                      : std::array<Condition, 3>{Condition::Lymphoma,
                                                 Condition::Nsclc,
                                                 Condition::Melanoma}
                            [static_cast<std::size_t>(patient_index % 3)];
    p.body_weight_kg = 70.0;
    p.injected_dose_bq = 3.5e8;
    return p;
}

std::vector<PatientRecord> phantom_dataset_records(const PhantomConfig& c,
                                                   int n_patients,
                                                   SplitFractions fractions) {
    if (n_patients < 5)
        throw ConfigError("phantom dataset: need at least 5 patients so every "
                          "split is nonempty");
    const double fsum = fractions.train + fractions.val + fractions.test;
    if (std::abs(fsum - 1.0) > 1e-9)
        throw ConfigError("split fractions: sum is " + std::to_string(fsum) +
                          ", expected 1");
    std::vector<PatientRecord> records;
    records.reserve(static_cast<std::size_t>(n_patients));
    for (int i = 0; i < n_patients; ++i) records.push_back(generate_phantom(c, i));

    // Quotas: floor for val/test, remainder to train.
    const int n_val = static_cast<int>(fractions.val * n_patients);
    const int n_test = static_cast<int>(fractions.test * n_patients);
    const int n_train = n_patients - n_val - n_test;
    if (n_train < 1 || n_val < 0 || n_test < 1)
        throw ConfigError("split fractions leave an empty train or test split");

    // Stratified assignment: within each condition, give the next patient
    // to the split with the largest remaining share of its quota.
    std::array<int, 3> quota{n_train, n_val, n_test};
    std::array<int, 3> assigned{0, 0, 0};
    std::array<Split, 3> split_of{Split::Train, Split::Val, Split::Test};
    for (Condition cond : {Condition::Lymphoma, Condition::Nsclc,
                           Condition::Melanoma, Condition::NegativeControl}) {
        for (auto& r : records) {
            if (r.condition != cond) continue;
            int best = -1;
            double best_share = -1.0;
            for (int s = 0; s < 3; ++s) {
                if (assigned[s] >= quota[s]) continue;
                const double share =
                    static_cast<double>(quota[s] - assigned[s]) / quota[s];
                if (share > best_share ||
                    (share == best_share && quota[s] > quota[best])) {
                    best = s;
                    best_share = share;
                }
            }
            r.split = split_of[static_cast<std::size_t>(best)];
            ++assigned[static_cast<std::size_t>(best)];
        }
    }
    return records;
}

Volume analytic_transfer_prediction(const PhantomConfig& c, const PatientRecord& p) {
    Volume out = Volume::zeros(p.ct.dims, Modality::SynthPet,
                               IntensityUnit::Normalized);
    out.spacing = p.ct.spacing;
    out.origin = p.ct.origin;
    for (std::size_t i = 0; i < p.ct.data.size(); ++i) {
        const int d = p.district_mask.labels[i];
        if (d == 0) continue;
        out.data[i] = static_cast<float>(
            c.transfers[static_cast<std::size_t>(d - 1)].apply(
                static_cast<double>(p.ct.data[i])));
    }
    return out;
}

}  // namespace vbody
