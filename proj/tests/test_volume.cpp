#include <cstring>
#include <fstream>

#include <doctest.h>

#include "test_util.hpp"
#include "vbody/volume.hpp"

using namespace vbody;
using testutil::TempDir;

TEST_SUITE_BEGIN("volume");

namespace {

Volume small(Dims dims, std::vector<float> values,
             IntensityUnit unit = IntensityUnit::Normalized) {
    Volume v = Volume::zeros(dims, Modality::CT, unit);
    v.data = std::move(values);
    return v;
}

// Minimal uncompressed NIfTI-1 file for the importer tests.
void write_nifti(const std::string& path, Dims dims, std::int16_t datatype,
                 float slope, float inter, const std::vector<char>& payload) {
    std::vector<char> hdr(352, 0);
    auto put_i32 = [&](std::size_t off, std::int32_t v) { std::memcpy(hdr.data() + off, &v, 4); };
    auto put_i16 = [&](std::size_t off, std::int16_t v) { std::memcpy(hdr.data() + off, &v, 2); };
    auto put_f32 = [&](std::size_t off, float v) { std::memcpy(hdr.data() + off, &v, 4); };
    put_i32(0, 348);
    put_i16(40, 3);
    for (int a = 0; a < 3; ++a) put_i16(42 + 2 * a, static_cast<std::int16_t>(dims[a]));
    for (int a = 3; a < 7; ++a) put_i16(42 + 2 * a, 1);
    put_i16(70, datatype);
    put_f32(80, 2.0f);  // pixdim[1]
    put_f32(84, 3.0f);
    put_f32(88, 4.0f);
    put_f32(108, 352.0f);  // vox_offset
    put_f32(112, slope);
    put_f32(116, inter);
    std::memcpy(hdr.data() + 344, "n+1\0", 4);
    std::ofstream f(path, std::ios::binary);
    f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

TEST_CASE("mask_apply identity and annihilator masks") {
    Volume v = testutil::random_volume({4, 3, 2}, 1);
    BinaryMask ones = testutil::full_mask(v.dims);
    BinaryMask zeros = ones;
    std::fill(zeros.indicator.begin(), zeros.indicator.end(), 0);

    CHECK(testutil::bitwise_equal(mask_apply(v, ones), v));
    const Volume out = mask_apply(v, zeros);
    for (float x : out.data) CHECK(x == 0.0f);
}

TEST_CASE("mask_apply hand element-wise product on 2x2x1") {
    Volume v = small({2, 2, 1}, {1, 2, 3, 4}, IntensityUnit::HU);
    BinaryMask m;
    m.dims = {2, 2, 1};
    m.indicator = {1, 0, 0, 1};
    const Volume out = mask_apply(v, m);
    CHECK(out.data == std::vector<float>{1, 0, 0, 4});
}

TEST_CASE("mask_apply rejects grid mismatch") {
    Volume v = testutil::random_volume({4, 4, 4}, 2);
    BinaryMask m = testutil::full_mask({4, 4, 3});
    CHECK_THROWS_AS(mask_apply(v, m), ShapeError);
}

TEST_CASE("mask_apply is idempotent under the same mask") {
    Volume v = testutil::random_volume({5, 6, 7}, 3);
    BinaryMask m = testutil::random_mask(v.dims, 4);
    const Volume once = mask_apply(v, m);
    CHECK(testutil::bitwise_equal(mask_apply(once, m), once));
}

TEST_CASE("volume_union_overwrite examples") {
    Volume dst = testutil::random_volume({3, 3, 3}, 5);
    Volume src = testutil::random_volume({3, 3, 3}, 6);
    BinaryMask zeros = testutil::full_mask(dst.dims);
    std::fill(zeros.indicator.begin(), zeros.indicator.end(), 0);
    CHECK(testutil::bitwise_equal(volume_union_overwrite(dst, src, zeros), dst));

    BinaryMask ones = testutil::full_mask(dst.dims);
    CHECK(testutil::bitwise_equal(volume_union_overwrite(dst, src, ones), src));

    Volume zero_vol = Volume::zeros({3, 3, 3}, Modality::CT, IntensityUnit::HU);
    Volume fives = small({3, 3, 3}, std::vector<float>(27, 5.0f), IntensityUnit::HU);
    BinaryMask some = testutil::random_mask(dst.dims, 7, 0.4);
    const Volume out = volume_union_overwrite(zero_vol, fives, some);
    std::int64_t count = 0;
    for (float x : out.data) count += x == 5.0f;
    CHECK(count == some.count_set());
}

TEST_CASE("vvol round trip is bit-exact") {
    TempDir dir("vvol");
    Volume v = testutil::random_volume({4, 4, 4}, 8);
    v.spacing = {1.5, 2.0, 2.5};
    v.origin = {-3.25, 0.5, 10.0};
    v.modality = Modality::PET;
    write_volume(v, dir.file("a.vvol"));
    const Volume back = read_volume(dir.file("a.vvol"));
    CHECK(testutil::bitwise_equal(back, v));
    CHECK(back.spacing == v.spacing);
    CHECK(back.origin == v.origin);
    CHECK(back.modality == v.modality);
    CHECK(back.unit == v.unit);
}

TEST_CASE("round trip preserves arbitrary finite HU payloads") {
    TempDir dir("hu");
    Volume v = testutil::random_volume({5, 4, 3}, 14, -1024.0f, 3000.0f);
    v.unit = IntensityUnit::HU;
    v.data[0] = -1024.0f;
    v.data[1] = 0.0f;
    v.data[2] = 1e-38f;
    write_volume(v, dir.file("hu.vvol"));
    CHECK(testutil::bitwise_equal(read_volume(dir.file("hu.vvol")), v));
}

TEST_CASE("truncated payload names expected and actual byte counts") {
    TempDir dir("trunc");
    Volume v = testutil::random_volume({4, 4, 4}, 9);
    write_volume(v, dir.file("a.vvol"));
    std::filesystem::resize_file(dir.file("a.vvol.raw"), 100);
    try {
        read_volume(dir.file("a.vvol"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("256") != std::string::npos);  // 4*4*4 voxels * 4 bytes
        CHECK(msg.find("100") != std::string::npos);
    }
}

TEST_CASE("header dims 400x400x200 with matching payload loads") {
    TempDir dir("big");
    Volume v = Volume::zeros({400, 400, 200}, Modality::PET,
                             IntensityUnit::Normalized);
    write_volume(v, dir.file("big.vvol"));
    const Volume back = read_volume(dir.file("big.vvol"));
    CHECK(back.dims == Dims{400, 400, 200});
    CHECK(static_cast<std::int64_t>(back.data.size()) == 400LL * 400 * 200);
}

TEST_CASE("unknown header version is rejected") {
    TempDir dir("ver");
    Volume v = testutil::random_volume({2, 2, 2}, 10);
    write_volume(v, dir.file("a.vvol"));
    std::ifstream in(dir.file("a.vvol"));
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("\"vvol_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 17, "\"vvol_version\": 9");
    std::ofstream out(dir.file("a.vvol"), std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS_AS(read_volume(dir.file("a.vvol")), FormatError);
}

TEST_CASE("NORMALIZED unit invariant is enforced on write and read") {
    TempDir dir("norm");
    Volume v = small({2, 1, 1}, {0.5f, 1.5f});
    CHECK_THROWS_AS(write_volume(v, dir.file("bad.vvol")), FormatError);

    // A file whose payload violates the advertised unit fails on read too.
    Volume ok = small({2, 1, 1}, {0.5f, 0.75f});
    write_volume(ok, dir.file("ok.vvol"));
    std::ofstream raw(dir.file("ok.vvol.raw"), std::ios::binary | std::ios::trunc);
    const float bad[2] = {0.5f, 2.5f};
    raw.write(reinterpret_cast<const char*>(bad), 8);
    raw.close();
    CHECK_THROWS_AS(read_volume(dir.file("ok.vvol")), FormatError);
}

TEST_CASE("district partition reconstructs the volume exactly") {
    Volume v = testutil::random_volume({6, 5, 4}, 11);
    DistrictLabelMask labels;
    labels.dims = v.dims;
    labels.labels.resize(static_cast<std::size_t>(v.size()));
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> d(0, 4);
    for (auto& l : labels.labels) l = static_cast<std::uint8_t>(d(rng));

    Volume sum = Volume::zeros(v.dims, v.modality, v.unit);
    for (int i = 1; i <= kNumDistricts; ++i) {
        BinaryMask m;
        m.dims = v.dims;
        m.district_id = i;
        m.indicator.resize(labels.labels.size());
        for (std::size_t j = 0; j < labels.labels.size(); ++j)
            m.indicator[j] = labels.labels[j] == i;
        const Volume part = mask_apply(v, m);
        for (std::size_t j = 0; j < sum.data.size(); ++j)
            sum.data[j] += part.data[j];
    }
    BinaryMask background;
    background.dims = v.dims;
    background.indicator.resize(labels.labels.size());
    for (std::size_t j = 0; j < labels.labels.size(); ++j)
        background.indicator[j] = labels.labels[j] == 0;
    const Volume bg = mask_apply(v, background);
    for (std::size_t j = 0; j < sum.data.size(); ++j)
        sum.data[j] += bg.data[j];
    CHECK(testutil::bitwise_equal(sum, v));
}

TEST_CASE("label mask volume conversion round trips and validates") {
    DistrictLabelMask m;
    m.dims = {3, 2, 1};
    m.labels = {0, 1, 2, 3, 4, 2};
    const Volume v = mask_to_volume(m);
    const DistrictLabelMask back = district_mask_from_volume(v);
    CHECK(back.labels == m.labels);

    Volume bad = small({2, 1, 1}, {1.0f, 7.0f}, IntensityUnit::Label);
    CHECK_THROWS_AS(district_mask_from_volume(bad), FormatError);
    Volume frac = small({2, 1, 1}, {1.0f, 0.5f}, IntensityUnit::Label);
    CHECK_THROWS_AS(binary_mask_from_volume(frac, 1), FormatError);
}

TEST_CASE("NIfTI import honors dims, pixdim, datatype and scaling") {
    TempDir dir("nifti");
    const Dims dims{3, 2, 2};
    SUBCASE("float32") {
        std::vector<float> vals(12);
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(i);
        std::vector<char> payload(vals.size() * 4);
        std::memcpy(payload.data(), vals.data(), payload.size());
        write_nifti(dir.file("a.nii"), dims, 16, 2.0f, 1.0f, payload);
        const Volume v = import_nifti(dir.file("a.nii"), Modality::CT,
                                      IntensityUnit::HU);
        CHECK(v.dims == dims);
        CHECK(v.spacing == Vec3{2.0, 3.0, 4.0});
        CHECK(v.data[3] == doctest::Approx(3.0f * 2.0f + 1.0f));
    }
    SUBCASE("int16 with scaling") {
        std::vector<std::int16_t> vals{-10, 0, 10, 20, 30, 40,
                                       50,  60, 70, 80, 90, 100};
        std::vector<char> payload(vals.size() * 2);
        std::memcpy(payload.data(), vals.data(), payload.size());
        write_nifti(dir.file("b.nii"), dims, 4, 0.5f, -1.0f, payload);
        const Volume v = import_nifti(dir.file("b.nii"), Modality::PET,
                                      IntensityUnit::BqPerMl);
        CHECK(v.data[0] == doctest::Approx(-10 * 0.5f - 1.0f));
        CHECK(v.data[11] == doctest::Approx(100 * 0.5f - 1.0f));
    }
    SUBCASE("unsupported datatype is named") {
        std::vector<char> payload(12 * 8, 0);
        write_nifti(dir.file("c.nii"), dims, 64, 1.0f, 0.0f, payload);  // float64
        try {
            import_nifti(dir.file("c.nii"), Modality::CT, IntensityUnit::HU);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("64") != std::string::npos);
        }
    }
}

TEST_SUITE_END();
