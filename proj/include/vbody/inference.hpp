#pragma once

#include <array>
#include <functional>

#include "vbody/models.hpp"
#include "vbody/patches.hpp"

namespace vbody {

// Patch-level translation callback; test doubles plug in here.
using PatchFn = std::function<std::vector<float>(const std::vector<float>&)>;

// Sliding-window translation: pads to the patch size if needed, applies fn
// per window, averages overlaps (stitch), unpads.
Volume translate_sliding(const Volume& ct, const PatchFn& fn,
                         int patch_size = kDefaultPatchSize,
                         int overlap = kDefaultOverlap);

// District translation re-masks the stitched output with the district mask
// so out-of-district voxels are exactly 0.
Volume translate_district_with(const PatchFn& fn, const DistrictBundle& b,
                               int patch_size = kDefaultPatchSize,
                               int overlap = kDefaultOverlap);
Volume translate_district(const ModelBundle& g, const DistrictBundle& b);

// Proposed pipeline: translate all four districts, assemble on the body
// grid, background exactly 0. models[i] serves district i+1.
Volume translate_patient(const std::array<const ModelBundle*, 4>& models,
                         const PatientRecord& p);
Volume translate_patient_with(const std::array<PatchFn, 4>& fns,
                              const PatientRecord& p,
                              int patch_size = kDefaultPatchSize,
                              int overlap = kDefaultOverlap);

// Competitor: one sliding-window pass over the full CT, background zeroed
// via the body mask.
Volume translate_patient_wholebody(const ModelBundle& g, const PatientRecord& p);
Volume translate_patient_wholebody_with(const PatchFn& fn, const PatientRecord& p,
                                        int patch_size = kDefaultPatchSize,
                                        int overlap = kDefaultOverlap);

}  // namespace vbody
