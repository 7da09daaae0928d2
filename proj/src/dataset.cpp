#include "vbody/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vbody {

namespace fs = std::filesystem;

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest '" + path + "'");
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["patient_id"] = e.patient_id;
        j["ct"] = e.ct_path;
        j["pet"] = e.pet_path;
        j["district_mask"] = e.district_mask_path;
        j["lesion_mask"] = e.lesion_mask_path;
        j["condition"] = to_string(e.condition);
        j["split"] = to_string(e.split);
        j["body_weight_kg"] = e.body_weight_kg;
        j["injected_dose_bq"] = e.injected_dose_bq;
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("failed writing manifest '" + path + "'");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest '" + path + "'");
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest '" + path + "' line " +
                              std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry e;
        try {
            e.patient_id = j.at("patient_id").get<std::string>();
            e.ct_path = j.at("ct").get<std::string>();
            e.pet_path = j.value("pet", std::string{});
            e.district_mask_path = j.at("district_mask").get<std::string>();
            e.lesion_mask_path = j.value("lesion_mask", std::string{});
            e.condition = condition_from_string(j.at("condition").get<std::string>());
            e.split = split_from_string(j.at("split").get<std::string>());
            e.body_weight_kg = j.value("body_weight_kg", 70.0);
            e.injected_dose_bq = j.value("injected_dose_bq", 3.5e8);
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("manifest '" + path + "' line " +
                              std::to_string(lineno) + ": " + ex.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

PatientRecord load_patient(const ManifestEntry& entry, const std::string& root_dir) {
    PatientRecord p;
    p.patient_id = entry.patient_id;
    p.condition = entry.condition;
    p.split = entry.split;
    p.body_weight_kg = entry.body_weight_kg;
    p.injected_dose_bq = entry.injected_dose_bq;
    if (!(p.body_weight_kg > 0.0) || !(p.injected_dose_bq > 0.0))
        throw FormatError("patient '" + p.patient_id +
                          "': body weight and injected dose must be positive");
    const fs::path root(root_dir);
    p.ct = read_volume((root / entry.ct_path).string());
    if (!entry.pet_path.empty()) {
        p.pet = read_volume((root / entry.pet_path).string());
        if (p.pet->dims != p.ct.dims)
            throw ShapeError("patient '" + p.patient_id +
                             "': PET grid differs from CT grid");
    }
    p.district_mask = district_mask_from_volume(
        read_volume((root / entry.district_mask_path).string()));
    if (p.district_mask.dims != p.ct.dims)
        throw ShapeError("patient '" + p.patient_id +
                         "': district mask grid differs from CT grid");
    if (!entry.lesion_mask_path.empty())
        p.lesion_mask = binary_mask_from_volume(
            read_volume((root / entry.lesion_mask_path).string()), kWholeBody);
    return p;
}

ManifestEntry write_patient(const PatientRecord& p, const std::string& out_dir) {
    const fs::path dir = fs::path(out_dir) / p.patient_id;
    fs::create_directories(dir);
    ManifestEntry e;
    e.patient_id = p.patient_id;
    e.condition = p.condition;
    e.split = p.split;
    e.body_weight_kg = p.body_weight_kg;
    e.injected_dose_bq = p.injected_dose_bq;

    e.ct_path = p.patient_id + "/ct.vvol";
    write_volume(p.ct, (fs::path(out_dir) / e.ct_path).string());
    if (p.pet) {
        e.pet_path = p.patient_id + "/pet.vvol";
        write_volume(*p.pet, (fs::path(out_dir) / e.pet_path).string());
    }
    e.district_mask_path = p.patient_id + "/district_mask.vvol";
    write_volume(mask_to_volume(p.district_mask),
                 (fs::path(out_dir) / e.district_mask_path).string());
    if (p.lesion_mask) {
        e.lesion_mask_path = p.patient_id + "/lesion_mask.vvol";
        write_volume(mask_to_volume(*p.lesion_mask),
                     (fs::path(out_dir) / e.lesion_mask_path).string());
    }
    return e;
}

std::string write_dataset(const std::vector<PatientRecord>& records,
                          const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) entries.push_back(write_patient(r, out_dir));
    const std::string manifest_path =
        (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(entries, manifest_path);
    return manifest_path;
}

std::vector<PatientRecord> load_dataset(const std::string& manifest_path) {
    const std::string root = fs::path(manifest_path).parent_path().string();
    std::vector<PatientRecord> out;
    for (const auto& e : read_manifest(manifest_path))
        out.push_back(load_patient(e, root));
    return out;
}

}  // namespace vbody
