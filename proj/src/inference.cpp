#include "vbody/inference.hpp"

namespace vbody {

Volume translate_sliding(const Volume& ct, const PatchFn& fn, int patch_size,
                         int overlap) {
    auto [padded, rec] = pad_to_min(ct, patch_size);
    const PatchGrid grid = patch_grid(padded.dims, patch_size, overlap);
    std::vector<StitchPatch> outputs;
    outputs.reserve(grid.starts.size());
    for (const auto& start : grid.starts) {
        StitchPatch sp;
        sp.origin = start;
        sp.extent = {patch_size, patch_size, patch_size};
        sp.values = fn(cut_patch(padded, start, patch_size));
        if (static_cast<std::int64_t>(sp.values.size()) != voxel_count(sp.extent))
            throw ShapeError("translate_sliding: patch function returned " +
                             std::to_string(sp.values.size()) + " values, expected " +
                             std::to_string(voxel_count(sp.extent)));
        outputs.push_back(std::move(sp));
    }
    Volume stitched = stitch(outputs, padded.dims);
    stitched.spacing = padded.spacing;
    stitched.origin = padded.origin;
    return unpad(stitched, rec);
}

Volume translate_district_with(const PatchFn& fn, const DistrictBundle& b,
                               int patch_size, int overlap) {
    Volume out = translate_sliding(b.ct, fn, patch_size, overlap);
    // Border windows see zero context outside the district; Eq-ivalently the
    // assembly selector zeroes them, so enforce it at district level already.
    return mask_apply(out, b.mask);
}

Volume translate_district(const ModelBundle& g, const DistrictBundle& b) {
    if (g.scope != b.district_id)
        throw OrchestrationError(
            std::string("translate_district: model scope '") +
            district_name(g.scope) + "' does not match bundle district '" +
            district_name(b.district_id) + "'");
    return translate_district_with(
        [&g](const std::vector<float>& patch) { return generator_forward(g, patch); },
        b, g.gen_cfg.patch_size, g.gen_cfg.patch_size / 2);
}

Volume translate_patient_with(const std::array<PatchFn, 4>& fns,
                              const PatientRecord& p, int patch_size, int overlap) {
    const auto bundles = extract_bundles(p);
    std::vector<std::pair<Volume, BinaryMask>> districts;
    districts.reserve(bundles.size());
    for (const auto& b : bundles) {
        districts.emplace_back(
            translate_district_with(fns[static_cast<std::size_t>(b.district_id - 1)],
                                    b, patch_size, overlap),
            b.mask);
    }
    return assemble(districts, p.ct.dims);
}

Volume translate_patient(const std::array<const ModelBundle*, 4>& models,
                         const PatientRecord& p) {
    std::array<PatchFn, 4> fns;
    int patch_size = kDefaultPatchSize;
    for (int i = 0; i < 4; ++i) {
        const ModelBundle* m = models[static_cast<std::size_t>(i)];
        if (!m)
            throw OrchestrationError(
                std::string("translate_patient: missing model for district '") +
                district_name(i + 1) + "'");
        if (m->scope != i + 1)
            throw OrchestrationError(
                std::string("translate_patient: model for district '") +
                district_name(i + 1) + "' has scope '" + district_name(m->scope) +
                "'");
        patch_size = m->gen_cfg.patch_size;
        fns[static_cast<std::size_t>(i)] = [m](const std::vector<float>& patch) {
            return generator_forward(*m, patch);
        };
    }
    return translate_patient_with(fns, p, patch_size, patch_size / 2);
}

Volume translate_patient_wholebody_with(const PatchFn& fn, const PatientRecord& p,
                                        int patch_size, int overlap) {
    Volume out = translate_sliding(p.ct, fn, patch_size, overlap);
    return mask_apply(out, body_mask(p.district_mask));
}

Volume translate_patient_wholebody(const ModelBundle& g, const PatientRecord& p) {
    if (g.scope != kWholeBody)
        throw OrchestrationError(
            std::string("translate_patient_wholebody: model scope is '") +
            district_name(g.scope) + "', expected 'whole_body'");
    return translate_patient_wholebody_with(
        [&g](const std::vector<float>& patch) { return generator_forward(g, patch); },
        p, g.gen_cfg.patch_size, g.gen_cfg.patch_size / 2);
}

}  // namespace vbody
