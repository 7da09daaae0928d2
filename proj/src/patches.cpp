#include "vbody/patches.hpp"

#include <random>

namespace vbody {

namespace {

std::vector<int> axis_starts(int dim, int s, int o) {
    std::vector<int> starts;
    const int stride = s - o;
    for (int start = 0; start + s <= dim; start += stride) starts.push_back(start);
    if (starts.empty() || starts.back() + s < dim) starts.push_back(dim - s);
    return starts;
}

}  // namespace

PatchGrid patch_grid(Dims dims, int patch_size, int overlap) {
    if (!(overlap > 0 && overlap < patch_size))
        throw ParameterError("patch_grid: need 0 < overlap < patch_size");
    for (int a = 0; a < 3; ++a)
        if (dims[a] < patch_size)
            throw SizeError("patch_grid: axis " + std::to_string(a) + " has dim " +
                            std::to_string(dims[a]) + " < patch size " +
                            std::to_string(patch_size) + "; pad the volume first");
    PatchGrid g;
    g.dims = dims;
    g.patch_size = patch_size;
    g.overlap = overlap;
    const auto xs = axis_starts(dims[0], patch_size, overlap);
    const auto ys = axis_starts(dims[1], patch_size, overlap);
    const auto zs = axis_starts(dims[2], patch_size, overlap);
    g.starts.reserve(xs.size() * ys.size() * zs.size());
    for (int z : zs)
        for (int y : ys)
            for (int x : xs) g.starts.push_back({x, y, z});
    return g;
}

std::vector<float> cut_patch(const Volume& v, std::array<int, 3> origin, int size) {
    std::vector<float> out(static_cast<std::size_t>(size) * size * size);
    std::size_t w = 0;
    for (int z = 0; z < size; ++z)
        for (int y = 0; y < size; ++y) {
            const float* row = &v.data[static_cast<std::size_t>(
                v.index(origin[0], origin[1] + y, origin[2] + z))];
            for (int x = 0; x < size; ++x) out[w++] = row[x];
        }
    return out;
}

std::vector<std::uint8_t> cut_patch(const BinaryMask& m, std::array<int, 3> origin,
                                    int size) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(size) * size * size);
    std::size_t w = 0;
    for (int z = 0; z < size; ++z)
        for (int y = 0; y < size; ++y) {
            const std::uint8_t* row = &m.indicator[static_cast<std::size_t>(
                m.index(origin[0], origin[1] + y, origin[2] + z))];
            for (int x = 0; x < size; ++x) out[w++] = row[x];
        }
    return out;
}

std::vector<PatchPair> sample_training_patches(const DistrictBundle& b, int count,
                                               double min_in_district_fraction,
                                               std::uint64_t seed, int patch_size) {
    if (min_in_district_fraction < 0.0 || min_in_district_fraction > 1.0)
        throw ParameterError("sample_training_patches: min fraction outside [0, 1]");
    if (!b.pet)
        throw ParameterError("sample_training_patches: bundle has no PET volume");
    const Dims dims = b.ct.dims;
    for (int a = 0; a < 3; ++a)
        if (dims[a] < patch_size)
            throw SizeError("sample_training_patches: axis " + std::to_string(a) +
                            " smaller than patch size; pad the bundle first");

    constexpr int kRejectionBudget = 10000;
    const auto n_patch = static_cast<std::int64_t>(patch_size) * patch_size * patch_size;
    const std::int64_t min_voxels = static_cast<std::int64_t>(
        std::ceil(min_in_district_fraction * static_cast<double>(n_patch)));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dx(0, dims[0] - patch_size);
    std::uniform_int_distribution<int> dy(0, dims[1] - patch_size);
    std::uniform_int_distribution<int> dz(0, dims[2] - patch_size);

    std::vector<PatchPair> out;
    out.reserve(static_cast<std::size_t>(count));
    int rejected = 0;
    while (static_cast<int>(out.size()) < count) {
        const std::array<int, 3> origin{dx(rng), dy(rng), dz(rng)};
        auto mask_patch = cut_patch(b.mask, origin, patch_size);
        std::int64_t in_mask = 0;
        for (std::uint8_t m : mask_patch) in_mask += m;
        if (in_mask < min_voxels) {
            if (++rejected >= kRejectionBudget)
                throw SamplingError(
                    "sample_training_patches: no origin with in-district fraction >= " +
                    std::to_string(min_in_district_fraction) + " after " +
                    std::to_string(kRejectionBudget) + " draws (district " +
                    district_name(b.district_id) + ")");
            continue;
        }
        PatchPair p;
        p.ct = cut_patch(b.ct, origin, patch_size);
        p.pet = cut_patch(*b.pet, origin, patch_size);
        p.mask = std::move(mask_patch);
        p.origin = origin;
        p.district_id = b.district_id;
        p.size = patch_size;
        out.push_back(std::move(p));
    }
    return out;
}

Volume stitch(const std::vector<StitchPatch>& patches, Dims dims) {
    const auto n = static_cast<std::size_t>(voxel_count(dims));
    std::vector<double> sum(n, 0.0);
    std::vector<std::int32_t> cover(n, 0);
    for (const auto& p : patches) {
        for (int a = 0; a < 3; ++a)
            if (p.origin[a] < 0 || p.origin[a] + p.extent[a] > dims[a])
                throw ShapeError("stitch: patch at (" + std::to_string(p.origin[0]) +
                                 ", " + std::to_string(p.origin[1]) + ", " +
                                 std::to_string(p.origin[2]) +
                                 ") does not fit inside the output grid");
        if (static_cast<std::int64_t>(p.values.size()) != voxel_count(p.extent))
            throw ShapeError("stitch: patch value count does not match its extent");
        std::size_t r = 0;
        for (int z = 0; z < p.extent[2]; ++z)
            for (int y = 0; y < p.extent[1]; ++y) {
                std::size_t w = static_cast<std::size_t>(
                    p.origin[0] +
                    static_cast<std::int64_t>(dims[0]) *
                        ((p.origin[1] + y) +
                         static_cast<std::int64_t>(dims[1]) * (p.origin[2] + z)));
                for (int x = 0; x < p.extent[0]; ++x, ++w, ++r) {
                    sum[w] += p.values[r];
                    ++cover[w];
                }
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (cover[i] == 0) {
            const int x = static_cast<int>(i % dims[0]);
            const int y = static_cast<int>((i / dims[0]) % dims[1]);
            const int z = static_cast<int>(i / dims[0] / dims[1]);
            throw CoverageError("stitch: voxel (" + std::to_string(x) + ", " +
                                std::to_string(y) + ", " + std::to_string(z) +
                                ") is covered by no patch");
        }
    Volume out = Volume::zeros(dims, Modality::SynthPet, IntensityUnit::Normalized);
    for (std::size_t i = 0; i < n; ++i)
        out.data[i] = static_cast<float>(sum[i] / cover[i]);
    return out;
}

Volume assemble(const std::vector<std::pair<Volume, BinaryMask>>& districts,
                Dims dims) {
    DistrictLabelMask labels;
    labels.dims = dims;
    labels.labels.assign(static_cast<std::size_t>(voxel_count(dims)), 0);
    std::vector<BinaryMask> masks;
    for (const auto& [vol, mask] : districts) {
        if (vol.dims != dims || mask.dims != dims)
            throw ShapeError("assemble: district grid differs from output grid");
        masks.push_back(mask);
        for (std::size_t i = 0; i < mask.indicator.size(); ++i)
            if (mask.indicator[i])
                labels.labels[i] = static_cast<std::uint8_t>(
                    mask.district_id >= 1 ? mask.district_id : 1);
    }
    const PartitionDiagnostics diag = partition_check(masks, labels);
    if (!diag.pass)
        throw PartitionError("assemble: masks do not form a partition: " +
                             diag.summary());

    Volume out = Volume::zeros(dims, Modality::SynthPet, IntensityUnit::Normalized);
    for (const auto& [vol, mask] : districts)
        for (std::size_t i = 0; i < mask.indicator.size(); ++i)
            if (mask.indicator[i]) out.data[i] = vol.data[i];
    return out;
}

namespace {

PadRecord pad_record_for(Dims dims, int min_size) {
    PadRecord rec;
    rec.original_dims = dims;
    for (int a = 0; a < 3; ++a) {
        const int deficit = min_size - dims[a];
        if (deficit > 0) {
            rec.lead[a] = deficit / 2;
            rec.trail[a] = deficit - rec.lead[a];
        }
    }
    return rec;
}

}  // namespace

std::pair<Volume, PadRecord> pad_to_min(const Volume& v, int min_size) {
    const PadRecord rec = pad_record_for(v.dims, min_size);
    if (!rec.padded()) return {v, rec};
    Dims padded;
    for (int a = 0; a < 3; ++a) padded[a] = v.dims[a] + rec.lead[a] + rec.trail[a];
    Volume out = Volume::zeros(padded, v.modality, v.unit);
    out.spacing = v.spacing;
    out.origin = {v.origin[0] - rec.lead[0] * v.spacing[0],
                  v.origin[1] - rec.lead[1] * v.spacing[1],
                  v.origin[2] - rec.lead[2] * v.spacing[2]};
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y)
            for (int x = 0; x < v.dims[0]; ++x)
                out.at(x + rec.lead[0], y + rec.lead[1], z + rec.lead[2]) =
                    v.at(x, y, z);
    return {std::move(out), rec};
}

std::pair<BinaryMask, PadRecord> pad_to_min(const BinaryMask& m, int min_size) {
    const PadRecord rec = pad_record_for(m.dims, min_size);
    if (!rec.padded()) return {m, rec};
    BinaryMask out;
    for (int a = 0; a < 3; ++a)
        out.dims[a] = m.dims[a] + rec.lead[a] + rec.trail[a];
    out.district_id = m.district_id;
    out.indicator.assign(static_cast<std::size_t>(voxel_count(out.dims)), 0);
    for (int z = 0; z < m.dims[2]; ++z)
        for (int y = 0; y < m.dims[1]; ++y)
            for (int x = 0; x < m.dims[0]; ++x)
                out.indicator[out.index(x + rec.lead[0], y + rec.lead[1],
                                        z + rec.lead[2])] =
                    m.indicator[m.index(x, y, z)];
    return {std::move(out), rec};
}

Volume unpad(const Volume& v, const PadRecord& rec) {
    if (!rec.padded()) return v;
    Volume out = Volume::zeros(rec.original_dims, v.modality, v.unit);
    out.spacing = v.spacing;
    out.origin = {v.origin[0] + rec.lead[0] * v.spacing[0],
                  v.origin[1] + rec.lead[1] * v.spacing[1],
                  v.origin[2] + rec.lead[2] * v.spacing[2]};
    for (int z = 0; z < out.dims[2]; ++z)
        for (int y = 0; y < out.dims[1]; ++y)
            for (int x = 0; x < out.dims[0]; ++x)
                out.at(x, y, z) =
                    v.at(x + rec.lead[0], y + rec.lead[1], z + rec.lead[2]);
    return out;
}

}  // namespace vbody
