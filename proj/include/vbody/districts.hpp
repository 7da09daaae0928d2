#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vbody/volume.hpp"

namespace vbody {

// Collapses an external segmentation vocabulary onto district ids {0..4}.
// File format: `source_label = district_id` lines, '#' comments.
struct LabelCollapseMap {
    std::map<std::int32_t, int> table;

    static LabelCollapseMap from_file(const std::string& path);
};

struct RawLabelVolume {
    Dims dims{1, 1, 1};
    std::vector<std::int32_t> labels;
};

struct DistrictBundle {
    int district_id = 0;
    Volume ct;
    std::optional<Volume> pet;
    BinaryMask mask;
};

struct PartitionDiagnostics {
    bool pass = false;
    std::int64_t overlap_voxels = 0;    // claimed by more than one mask
    std::int64_t missing_voxels = 0;    // labeled but uncovered
    std::int64_t extra_voxels = 0;      // covered but background
    std::string summary() const;
};

DistrictLabelMask collapse_labels(const RawLabelVolume& raw,
                                  const LabelCollapseMap& map);

std::vector<BinaryMask> binary_masks(const DistrictLabelMask& m);

PartitionDiagnostics partition_check(const std::vector<BinaryMask>& masks,
                                     const DistrictLabelMask& m);

std::vector<DistrictBundle> extract_bundles(const PatientRecord& p);

}  // namespace vbody
