#include "vbody/volume.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vbody {

namespace {

constexpr int kVvolVersion = 1;

bool is_little_endian_host() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

}  // namespace

const char* to_string(Modality m) {
    switch (m) {
        case Modality::CT: return "CT";
        case Modality::PET: return "PET";
        case Modality::SynthPet: return "SYNTH_PET";
        case Modality::Labels: return "LABELS";
    }
    return "?";
}

const char* to_string(IntensityUnit u) {
    switch (u) {
        case IntensityUnit::HU: return "HU";
        case IntensityUnit::BqPerMl: return "BQ_PER_ML";
        case IntensityUnit::Suv: return "SUV";
        case IntensityUnit::Normalized: return "NORMALIZED";
        case IntensityUnit::Label: return "LABEL";
    }
    return "?";
}

const char* to_string(Condition c) {
    switch (c) {
        case Condition::Lymphoma: return "LYMPHOMA";
        case Condition::Nsclc: return "NSCLC";
        case Condition::Melanoma: return "MELANOMA";
        case Condition::NegativeControl: return "NEGATIVE_CONTROL";
    }
    return "?";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "TRAIN";
        case Split::Val: return "VAL";
        case Split::Test: return "TEST";
    }
    return "?";
}

Modality modality_from_string(const std::string& s) {
    if (s == "CT") return Modality::CT;
    if (s == "PET") return Modality::PET;
    if (s == "SYNTH_PET") return Modality::SynthPet;
    if (s == "LABELS") return Modality::Labels;
    throw FormatError("unknown modality '" + s + "'");
}

IntensityUnit unit_from_string(const std::string& s) {
    if (s == "HU") return IntensityUnit::HU;
    if (s == "BQ_PER_ML") return IntensityUnit::BqPerMl;
    if (s == "SUV") return IntensityUnit::Suv;
    if (s == "NORMALIZED") return IntensityUnit::Normalized;
    if (s == "LABEL") return IntensityUnit::Label;
    throw FormatError("unknown intensity_unit '" + s + "'");
}

Condition condition_from_string(const std::string& s) {
    if (s == "LYMPHOMA") return Condition::Lymphoma;
    if (s == "NSCLC") return Condition::Nsclc;
    if (s == "MELANOMA") return Condition::Melanoma;
    if (s == "NEGATIVE_CONTROL") return Condition::NegativeControl;
    throw FormatError("unknown condition '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "TRAIN") return Split::Train;
    if (s == "VAL") return Split::Val;
    if (s == "TEST") return Split::Test;
    throw FormatError("unknown split '" + s + "'");
}

const char* district_name(int district_id) {
    switch (district_id) {
        case kWholeBody: return "whole_body";
        case 1: return "head";
        case 2: return "trunk";
        case 3: return "arms";
        case 4: return "legs";
    }
    throw ParameterError("district id out of range: " + std::to_string(district_id));
}

int district_from_name(const std::string& name) {
    for (int i = 0; i <= kNumDistricts; ++i)
        if (name == district_name(i)) return i;
    throw ParameterError("unknown district name '" + name + "'");
}

Volume Volume::zeros(Dims dims, Modality m, IntensityUnit u) {
    Volume v;
    v.dims = dims;
    v.modality = m;
    v.unit = u;
    v.data.assign(static_cast<std::size_t>(voxel_count(dims)), 0.0f);
    return v;
}

void Volume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1)
            throw FormatError("dims: axis " + std::to_string(a) + " < 1");
        if (!(spacing[a] > 0.0))
            throw FormatError("spacing: axis " + std::to_string(a) + " not positive");
    }
    if (static_cast<std::int64_t>(data.size()) != size())
        throw FormatError("payload: expected " + std::to_string(size()) +
                          " voxels, have " + std::to_string(data.size()));
    if (unit == IntensityUnit::Normalized) {
        for (float f : data)
            if (!(f >= 0.0f && f <= 1.0f))
                throw FormatError("payload: NORMALIZED value outside [0, 1]: " +
                                  std::to_string(f));
    } else if (unit == IntensityUnit::Suv) {
        for (float f : data)
            if (!(f >= 0.0f))
                throw FormatError("payload: negative SUV value: " + std::to_string(f));
    }
}

std::int64_t BinaryMask::count_set() const {
    std::int64_t n = 0;
    for (std::uint8_t b : indicator) n += b;
    return n;
}

Volume mask_apply(const Volume& v, const BinaryMask& m) {
    if (v.dims != m.dims)
        throw ShapeError("mask_apply: volume and mask grids differ");
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = m.indicator[i] ? v.data[i] : 0.0f;
    return out;
}

Volume volume_union_overwrite(const Volume& dst, const Volume& src,
                              const BinaryMask& m) {
    if (dst.dims != src.dims || dst.dims != m.dims)
        throw ShapeError("volume_union_overwrite: grids differ");
    Volume out = dst;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (m.indicator[i]) out.data[i] = src.data[i];
    return out;
}

BinaryMask body_mask(const DistrictLabelMask& m) {
    BinaryMask out;
    out.dims = m.dims;
    out.district_id = kWholeBody;
    out.indicator.resize(m.labels.size());
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        out.indicator[i] = m.labels[i] != 0 ? 1 : 0;
    return out;
}

void write_volume(const Volume& v, const std::string& path) {
    v.validate();
    const std::string raw_path = path + ".raw";

    nlohmann::ordered_json header;
    header["vvol_version"] = kVvolVersion;
    header["dims"] = v.dims;
    header["spacing"] = v.spacing;
    header["origin"] = v.origin;
    header["modality"] = to_string(v.modality);
    header["intensity_unit"] = to_string(v.unit);
    header["dtype"] = "float32";
    header["endianness"] = "little";
    header["payload"] = std::filesystem::path(raw_path).filename().string();

    std::ofstream hf(path, std::ios::trunc);
    if (!hf) throw IoError("cannot open '" + path + "' for writing");
    hf << header.dump(2) << "\n";
    if (!hf) throw IoError("failed writing header '" + path + "'");
    hf.close();

    std::ofstream rf(raw_path, std::ios::binary | std::ios::trunc);
    if (!rf) throw IoError("cannot open '" + raw_path + "' for writing");
    if (is_little_endian_host()) {
        rf.write(reinterpret_cast<const char*>(v.data.data()),
                 static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    } else {
        for (float f : v.data) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            const char bytes[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                                   static_cast<char>(u >> 16),
                                   static_cast<char>(u >> 24)};
            rf.write(bytes, 4);
        }
    }
    if (!rf) throw IoError("failed writing payload '" + raw_path + "'");
}

Volume read_volume(const std::string& path) {
    std::ifstream hf(path);
    if (!hf) throw IoError("cannot open '" + path + "'");
    nlohmann::json header;
    try {
        hf >> header;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("header: invalid JSON in '" + path + "': " + e.what());
    }

    auto require = [&](const char* key) -> const nlohmann::json& {
        if (!header.contains(key))
            throw FormatError(std::string("header: missing field '") + key + "'");
        return header.at(key);
    };

    const int version = require("vvol_version").get<int>();
    if (version != kVvolVersion)
        throw FormatError("vvol_version: unknown version " + std::to_string(version));
    if (require("dtype").get<std::string>() != "float32")
        throw FormatError("dtype: expected float32, got '" +
                          header["dtype"].get<std::string>() + "'");
    if (require("endianness").get<std::string>() != "little")
        throw FormatError("endianness: expected little, got '" +
                          header["endianness"].get<std::string>() + "'");

    Volume v;
    const auto dims = require("dims");
    if (!dims.is_array() || dims.size() != 3)
        throw FormatError("dims: expected 3 entries");
    for (int a = 0; a < 3; ++a) {
        v.dims[a] = dims[a].get<int>();
        if (v.dims[a] < 1) throw FormatError("dims: axis " + std::to_string(a) + " < 1");
    }
    for (int a = 0; a < 3; ++a) {
        v.spacing[a] = require("spacing")[a].get<double>();
        v.origin[a] = require("origin")[a].get<double>();
        if (!(v.spacing[a] > 0.0))
            throw FormatError("spacing: axis " + std::to_string(a) + " not positive");
    }
    v.modality = modality_from_string(require("modality").get<std::string>());
    v.unit = unit_from_string(require("intensity_unit").get<std::string>());

    const std::string payload_name = require("payload").get<std::string>();
    const std::string raw_path =
        (std::filesystem::path(path).parent_path() / payload_name).string();
    std::ifstream rf(raw_path, std::ios::binary | std::ios::ate);
    if (!rf) throw IoError("cannot open payload '" + raw_path + "'");
    const std::int64_t actual_bytes = static_cast<std::int64_t>(rf.tellg());
    const std::int64_t expected_bytes = voxel_count(v.dims) * 4;
    if (actual_bytes != expected_bytes)
        throw FormatError("payload: expected " + std::to_string(expected_bytes) +
                          " bytes, file has " + std::to_string(actual_bytes));
    rf.seekg(0);
    v.data.resize(static_cast<std::size_t>(voxel_count(v.dims)));
    rf.read(reinterpret_cast<char*>(v.data.data()), expected_bytes);
    if (!rf) throw IoError("failed reading payload '" + raw_path + "'");
    if (!is_little_endian_host()) {
        for (float& f : v.data) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) |
                (u >> 24);
            std::memcpy(&f, &u, 4);
        }
    }
    v.validate();
    return v;
}

Volume mask_to_volume(const DistrictLabelMask& m) {
    Volume v = Volume::zeros(m.dims, Modality::Labels, IntensityUnit::Label);
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        v.data[i] = static_cast<float>(m.labels[i]);
    return v;
}

Volume mask_to_volume(const BinaryMask& m) {
    Volume v = Volume::zeros(m.dims, Modality::Labels, IntensityUnit::Label);
    for (std::size_t i = 0; i < m.indicator.size(); ++i)
        v.data[i] = static_cast<float>(m.indicator[i]);
    return v;
}

DistrictLabelMask district_mask_from_volume(const Volume& v) {
    DistrictLabelMask m;
    m.dims = v.dims;
    m.labels.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float f = v.data[i];
        const int label = static_cast<int>(std::lround(f));
        if (std::abs(f - label) > 1e-6f || label < 0 || label > kNumDistricts)
            throw FormatError("labels: value " + std::to_string(f) +
                              " is not a district label in {0..4}");
        m.labels[i] = static_cast<std::uint8_t>(label);
    }
    return m;
}

BinaryMask binary_mask_from_volume(const Volume& v, int district_id) {
    BinaryMask m;
    m.dims = v.dims;
    m.district_id = district_id;
    m.indicator.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float f = v.data[i];
        if (f != 0.0f && f != 1.0f)
            throw FormatError("indicator: value " + std::to_string(f) +
                              " is not binary");
        m.indicator[i] = f != 0.0f ? 1 : 0;
    }
    return m;
}

Volume import_nifti(const std::string& path, Modality modality,
                    IntensityUnit unit) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");

    // NIfTI-1 header is a fixed 348-byte layout.
    std::vector<char> hdr(348);
    f.read(hdr.data(), 348);
    if (!f) throw FormatError("header: file shorter than 348 bytes");

    auto get_i32 = [&](std::size_t off) {
        std::int32_t v;
        std::memcpy(&v, hdr.data() + off, 4);
        return v;
    };
    auto get_i16 = [&](std::size_t off) {
        std::int16_t v;
        std::memcpy(&v, hdr.data() + off, 2);
        return v;
    };
    auto get_f32 = [&](std::size_t off) {
        float v;
        std::memcpy(&v, hdr.data() + off, 4);
        return v;
    };

    if (get_i32(0) != 348)
        throw FormatError("sizeof_hdr: expected 348 (byte-swapped files unsupported)");
    if (std::memcmp(hdr.data() + 344, "n+1\0", 4) != 0 &&
        std::memcmp(hdr.data() + 344, "ni1\0", 4) != 0)
        throw FormatError("magic: not a NIfTI-1 file");

    const std::int16_t ndim = get_i16(40);
    if (ndim < 3)
        throw FormatError("dim: expected >= 3 dimensions, got " + std::to_string(ndim));
    Volume v;
    for (int a = 0; a < 3; ++a) {
        v.dims[a] = get_i16(40 + 2 * (a + 1));
        if (v.dims[a] < 1)
            throw FormatError("dim: axis " + std::to_string(a) + " < 1");
        v.spacing[a] = get_f32(76 + 4 * (a + 1));
        if (!(v.spacing[a] > 0.0)) v.spacing[a] = 1.0;
    }
    for (int a = 4; a <= ndim && a <= 7; ++a)
        if (get_i16(40 + 2 * a) > 1)
            throw FormatError("dim: only 3D volumes supported");
    v.origin = {static_cast<double>(get_f32(268)), static_cast<double>(get_f32(272)),
                static_cast<double>(get_f32(276))};  // qoffset x/y/z
    v.modality = modality;
    v.unit = unit;

    const std::int16_t datatype = get_i16(70);
    float slope = get_f32(112);
    const float inter = get_f32(116);
    if (slope == 0.0f) slope = 1.0f;
    const float vox_offset = get_f32(108);
    if (std::memcmp(hdr.data() + 344, "n+1\0", 4) != 0)
        throw FormatError("magic: detached .hdr/.img pairs unsupported");
    f.seekg(static_cast<std::streamoff>(vox_offset));

    const std::int64_t n = voxel_count(v.dims);
    v.data.resize(static_cast<std::size_t>(n));
    if (datatype == 16) {  // float32
        f.read(reinterpret_cast<char*>(v.data.data()), n * 4);
        if (!f) throw FormatError("payload: truncated float32 data");
        for (float& x : v.data) x = x * slope + inter;
    } else if (datatype == 4) {  // int16
        std::vector<std::int16_t> raw(static_cast<std::size_t>(n));
        f.read(reinterpret_cast<char*>(raw.data()), n * 2);
        if (!f) throw FormatError("payload: truncated int16 data");
        for (std::int64_t i = 0; i < n; ++i)
            v.data[static_cast<std::size_t>(i)] =
                static_cast<float>(raw[static_cast<std::size_t>(i)]) * slope + inter;
    } else {
        throw FormatError("datatype: unsupported code " + std::to_string(datatype) +
                          " (float32=16 and int16=4 supported)");
    }
    return v;
}

}  // namespace vbody
