#pragma once

#include <string>
#include <vector>

#include "vbody/volume.hpp"

namespace vbody {

// One manifest line; volume paths are relative to the manifest directory.
// Empty paths mark absent volumes (e.g. no lesion mask, no reference PET).
struct ManifestEntry {
    std::string patient_id;
    std::string ct_path;
    std::string pet_path;
    std::string district_mask_path;
    std::string lesion_mask_path;
    Condition condition = Condition::NegativeControl;
    Split split = Split::Train;
    double body_weight_kg = 70.0;
    double injected_dose_bq = 3.5e8;
};

// JSON-lines manifest, one entry per patient.
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

PatientRecord load_patient(const ManifestEntry& entry, const std::string& root_dir);

// Writes the patient's volumes under out_dir/<patient_id>/ and returns the
// manifest entry with relative paths.
ManifestEntry write_patient(const PatientRecord& p, const std::string& out_dir);

// Convenience: write every record plus the manifest; returns manifest path.
std::string write_dataset(const std::vector<PatientRecord>& records,
                          const std::string& out_dir);

std::vector<PatientRecord> load_dataset(const std::string& manifest_path);

}  // namespace vbody
