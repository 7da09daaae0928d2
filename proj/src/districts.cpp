#include "vbody/districts.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace vbody {

LabelCollapseMap LabelCollapseMap::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open label map '" + path + "'");
    LabelCollapseMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::int32_t src;
        char eq;
        int dst;
        if (!(ls >> std::ws) || ls.eof()) continue;
        if (!(ls >> src >> eq >> dst) || eq != '=')
            throw MappingError("label map '" + path + "' line " +
                               std::to_string(lineno) +
                               ": expected 'source_label = district_id'");
        if (dst < 0 || dst > kNumDistricts)
            throw MappingError("label map '" + path + "' line " +
                               std::to_string(lineno) + ": district id " +
                               std::to_string(dst) + " outside {0..4}");
        out.table[src] = dst;
    }
    return out;
}

DistrictLabelMask collapse_labels(const RawLabelVolume& raw,
                                  const LabelCollapseMap& map) {
    DistrictLabelMask out;
    out.dims = raw.dims;
    out.labels.resize(raw.labels.size());
    std::set<std::int32_t> unmapped;
    for (std::size_t i = 0; i < raw.labels.size(); ++i) {
        const auto it = map.table.find(raw.labels[i]);
        if (it == map.table.end()) {
            unmapped.insert(raw.labels[i]);
            continue;
        }
        out.labels[i] = static_cast<std::uint8_t>(it->second);
    }
    if (!unmapped.empty()) {
        std::string msg = "collapse_labels: unmapped source labels:";
        for (std::int32_t l : unmapped) msg += " " + std::to_string(l);
        throw MappingError(msg);
    }
    return out;
}

std::vector<BinaryMask> binary_masks(const DistrictLabelMask& m) {
    std::vector<BinaryMask> out(kNumDistricts);
    for (int i = 0; i < kNumDistricts; ++i) {
        out[i].dims = m.dims;
        out[i].district_id = i + 1;
        out[i].indicator.assign(m.labels.size(), 0);
    }
    for (std::size_t v = 0; v < m.labels.size(); ++v) {
        const int label = m.labels[v];
        if (label >= 1 && label <= kNumDistricts) out[label - 1].indicator[v] = 1;
    }
    return out;
}

PartitionDiagnostics partition_check(const std::vector<BinaryMask>& masks,
                                     const DistrictLabelMask& m) {
    for (const auto& mask : masks)
        if (mask.dims != m.dims)
            throw ShapeError("partition_check: mask grid differs from label grid");
    PartitionDiagnostics d;
    for (std::size_t v = 0; v < m.labels.size(); ++v) {
        int cover = 0;
        for (const auto& mask : masks) cover += mask.indicator[v];
        if (cover > 1) d.overlap_voxels += cover - 1;
        const bool labeled = m.labels[v] != 0;
        if (labeled && cover == 0) ++d.missing_voxels;
        if (!labeled && cover > 0) ++d.extra_voxels;
    }
    d.pass = d.overlap_voxels == 0 && d.missing_voxels == 0 && d.extra_voxels == 0;
    return d;
}

std::string PartitionDiagnostics::summary() const {
    return std::string(pass ? "pass" : "fail") +
           " (overlap=" + std::to_string(overlap_voxels) +
           ", missing=" + std::to_string(missing_voxels) +
           ", extra=" + std::to_string(extra_voxels) + ")";
}

std::vector<DistrictBundle> extract_bundles(const PatientRecord& p) {
    if (p.ct.dims != p.district_mask.dims)
        throw ShapeError("extract_bundles: ct and district mask grids differ");
    if (p.pet && p.pet->dims != p.ct.dims)
        throw ShapeError("extract_bundles: ct and pet grids differ");
    std::vector<DistrictBundle> out;
    out.reserve(kNumDistricts);
    for (BinaryMask& mask : binary_masks(p.district_mask)) {
        DistrictBundle b;
        b.district_id = mask.district_id;
        b.ct = mask_apply(p.ct, mask);
        if (p.pet) b.pet = mask_apply(*p.pet, mask);
        b.mask = std::move(mask);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace vbody
