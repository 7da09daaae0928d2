#include <cmath>
#include <fstream>

#include <doctest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vbody/evaluation.hpp"
#include "vbody/phantom.hpp"

using namespace vbody;
using testutil::TempDir;

TEST_SUITE_BEGIN("evaluation");

namespace {

Volume constant_volume(Dims dims, float value) {
    Volume v = Volume::zeros(dims, Modality::SynthPet, IntensityUnit::Normalized);
    std::fill(v.data.begin(), v.data.end(), value);
    return v;
}

}  // namespace

TEST_CASE("mae basics") {
    const Dims dims{4, 4, 4};
    Volume ref = testutil::random_volume(dims, 91);
    BinaryMask all = testutil::full_mask(dims);
    CHECK(mae(ref, ref, all) == 0.0);

    CHECK(mae(constant_volume(dims, 0.5f), constant_volume(dims, 0.25f), all) ==
          doctest::Approx(0.25));

    BinaryMask one;
    one.dims = dims;
    one.indicator.assign(64, 0);
    one.indicator[13] = 1;
    Volume a = constant_volume(dims, 0.3f), b = constant_volume(dims, 0.2f);
    CHECK(mae(a, b, one) == doctest::Approx(0.1));

    BinaryMask empty;
    empty.dims = dims;
    empty.indicator.assign(64, 0);
    CHECK_THROWS_AS(mae(a, b, empty), RegionError);
}

TEST_CASE("mae ignores values outside the region") {
    const Dims dims{4, 4, 4};
    Volume a = testutil::random_volume(dims, 92);
    Volume b = testutil::random_volume(dims, 93);
    BinaryMask region = testutil::random_mask(dims, 94, 0.5);
    if (region.count_set() == 0) region.indicator[0] = 1;
    const double before = mae(a, b, region);
    Volume a2 = a;
    for (std::size_t i = 0; i < a2.data.size(); ++i)
        if (!region.indicator[i]) a2.data[i] = 0.987f;
    CHECK(mae(a2, b, region) == before);
}

TEST_CASE("psnr formula and sentinel") {
    const Dims dims{4, 4, 4};
    BinaryMask all = testutil::full_mask(dims);
    // |diff| = 0.1 everywhere -> MSE 0.01 -> 20 dB.
    CHECK(psnr(constant_volume(dims, 0.6f), constant_volume(dims, 0.5f), all) ==
          doctest::Approx(20.0).epsilon(1e-6));
    // |diff| = 1 -> 0 dB.
    CHECK(psnr(constant_volume(dims, 1.0f), constant_volume(dims, 0.0f), all) ==
          doctest::Approx(0.0));
    Volume same = testutil::random_volume(dims, 95);
    CHECK(std::isinf(psnr(same, same, all)));
}

TEST_CASE("psnr strictly decreases as MSE grows") {
    const Dims dims{4, 4, 4};
    BinaryMask all = testutil::full_mask(dims);
    double prev = std::numeric_limits<double>::infinity();
    for (float d : {0.05f, 0.1f, 0.2f, 0.4f}) {
        const double cur =
            psnr(constant_volume(dims, 0.5f + d), constant_volume(dims, 0.5f), all);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("ssim3d is 1 for identical non-constant volumes") {
    Volume v = testutil::random_volume({12, 12, 12}, 96);
    BinaryMask all = testutil::full_mask(v.dims);
    CHECK(ssim3d(v, v, all) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("inverted high-variance field scores below 0.5") {
    Volume ref = testutil::random_volume({16, 16, 16}, 97);
    Volume inv = ref;
    for (float& x : inv.data) x = 1.0f - x;
    BinaryMask all = testutil::full_mask(ref.dims);
    CHECK(ssim3d(inv, ref, all) < 0.5);
}

TEST_CASE("ssim3d matches the brute-force oracle") {
    std::mt19937_64 rng(98);
    std::uniform_int_distribution<int> dim(8, 16);
    for (int trial = 0; trial < 10; ++trial) {
        const Dims dims{dim(rng), dim(rng), dim(rng)};
        Volume a = testutil::random_volume(dims, 100 + static_cast<std::uint64_t>(trial));
        Volume b = testutil::random_volume(dims, 200 + static_cast<std::uint64_t>(trial));
        BinaryMask all = testutil::full_mask(dims);
        const double fast = ssim3d(a, b, all);
        const double brute = oracles::ssim_brute(a, b, all);
        CHECK(std::abs(fast - brute) <= 1e-5);
    }
}

TEST_CASE("ssim3d requires the window to fit the region bounding box") {
    Volume a = testutil::random_volume({16, 16, 16}, 99);
    BinaryMask thin;
    thin.dims = a.dims;
    thin.indicator.assign(a.data.size(), 0);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            thin.indicator[thin.index(x, y, 3)] = 1;  // single slice
    CHECK_THROWS_AS(ssim3d(a, a, thin), RegionError);
}

TEST_CASE("evaluate_patient emits one record per scorable scope") {
    PhantomConfig pc;
    pc.dims = {48, 48, 96};
    pc.lesion_count_min = 2;
    pc.lesion_count_max = 3;
    pc.lesion_radius_min = 3.5;
    pc.lesion_radius_max = 4.5;
    pc.seed = 101;
    PatientRecord p = generate_phantom(pc, 0);
    REQUIRE(p.lesion_mask->count_set() > 0);

    auto records = evaluate_patient(*p.pet, p, "proposed", Arch::Pix2Pix);
    CHECK(records.size() == 6);  // 4 districts + whole body + lesion
    for (const auto& r : records) {
        CHECK(r.mae == 0.0);
        if (!std::isnan(r.ssim)) CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::isinf(r.psnr));  // excluded later by aggregation
    }

    PatientRecord no_lesions = p;
    no_lesions.lesion_mask.reset();
    CHECK(evaluate_patient(*p.pet, no_lesions, "proposed", Arch::Pix2Pix).size() ==
          5);
}

TEST_CASE("aggregate computes mean and standard error per group") {
    std::vector<MetricRecord> records;
    for (double v : {1.0, 2.0, 3.0}) {
        MetricRecord r;
        r.patient_id = "p" + std::to_string(static_cast<int>(v));
        r.scope = "trunk";
        r.method = "proposed";
        r.mae = v;
        r.psnr = 30.0;
        r.ssim = 0.9;
        records.push_back(r);
    }
    const CohortReport report = aggregate(records, GroupBy::Scope);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].mae.mean == doctest::Approx(2.0));
    CHECK(report.rows[0].mae.se == doctest::Approx(0.57735).epsilon(1e-4));
    CHECK(report.rows[0].mae.n == 3);

    // Single value: SE = 0 by convention.
    const CohortReport single = aggregate({records[0]}, GroupBy::Scope);
    CHECK(single.rows[0].mae.se == 0.0);
    CHECK(single.rows[0].mae.n == 1);

    CHECK_THROWS_AS(aggregate({}, GroupBy::Scope), ReportError);
}

TEST_CASE("aggregate excludes infinite PSNR and NaN SSIM with a count") {
    std::vector<MetricRecord> records(3);
    for (int i = 0; i < 3; ++i) {
        records[static_cast<std::size_t>(i)].scope = "lesion";
        records[static_cast<std::size_t>(i)].method = "m";
        records[static_cast<std::size_t>(i)].mae = 0.1;
        records[static_cast<std::size_t>(i)].psnr = 25.0;
        records[static_cast<std::size_t>(i)].ssim = 0.8;
    }
    records[1].psnr = std::numeric_limits<double>::infinity();
    records[2].ssim = std::numeric_limits<double>::quiet_NaN();
    const CohortReport report = aggregate(records, GroupBy::Scope);
    CHECK(report.rows[0].psnr.n == 2);
    CHECK(report.rows[0].psnr.excluded == 1);
    CHECK(report.rows[0].ssim.n == 2);
    CHECK(report.rows[0].ssim.excluded == 1);
    CHECK(report.rows[0].mae.n == 3);
}

TEST_CASE("paired_ttest degenerate cases use the documented sentinels") {
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    const auto [t0, p0] = paired_ttest(a, a);
    CHECK(t0 == 0.0);
    CHECK(p0 == 1.0);

    std::vector<double> b(a);
    for (double& v : b) v -= 1.0;  // d = {1,1,1,1}
    const auto [t1, p1] = paired_ttest(a, b);
    CHECK(std::isinf(t1));
    CHECK(t1 > 0);
    CHECK(p1 == 0.0);  // reported as p < 1e-12

    CHECK_THROWS_AS(paired_ttest(a, std::vector<double>{1.0, 2.0}), PairingError);
    CHECK_THROWS_AS(paired_ttest({1.0}, {2.0}), PairingError);
}

TEST_CASE("paired_ttest matches the reference value on d = 1..5") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{0, 0, 0, 0, 0};
    const auto [t, p] = paired_ttest(a, b);
    CHECK(t == doctest::Approx(4.242640687).epsilon(1e-8));
    CHECK(p == doctest::Approx(0.01324).epsilon(1e-3));
    const double oracle = oracles::t_two_tailed_p_quadrature(t, 4);
    CHECK(std::abs(p - oracle) <= 1e-9);
}

TEST_CASE("paired_ttest is antisymmetric under swapping the samples") {
    std::mt19937_64 rng(103);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = n(rng) + 0.3;
        b[i] = n(rng);
    }
    const auto [t_ab, p_ab] = paired_ttest(a, b);
    const auto [t_ba, p_ba] = paired_ttest(b, a);
    CHECK(t_ab == doctest::Approx(-t_ba).epsilon(1e-12));
    CHECK(p_ab == doctest::Approx(p_ba).epsilon(1e-12));
}

TEST_CASE("paired_ttest agrees with the quadrature oracle on random samples") {
    std::mt19937_64 rng(104);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::uniform_int_distribution<int> size(5, 30);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = size(rng);
        std::vector<double> a(static_cast<std::size_t>(n)),
            b(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            a[static_cast<std::size_t>(i)] = noise(rng) + 0.2;
            b[static_cast<std::size_t>(i)] = noise(rng);
        }
        const auto [t, p] = paired_ttest(a, b);
        const double oracle = oracles::t_two_tailed_p_quadrature(t, n - 1);
        CHECK(std::abs(p - oracle) <= 1e-9);
    }
}

TEST_CASE("emit_report writes the three table levels plus t-tests") {
    TempDir dir("report");
    std::vector<MetricRecord> records;
    const char* scopes[] = {"head", "trunk", "arms", "legs", "whole_body",
                            "lesion"};
    const Condition conds[] = {Condition::Lymphoma, Condition::Nsclc,
                               Condition::Melanoma, Condition::NegativeControl};
    for (int pi = 0; pi < 4; ++pi)
        for (const char* scope : scopes)
            for (const char* method : {"proposed", "competitor"}) {
                MetricRecord r;
                r.patient_id = "p" + std::to_string(pi);
                r.scope = scope;
                r.condition = conds[pi];
                r.method = method;
                r.arch = Arch::Pix2Pix;
                r.mae = 0.01 + 0.001 * pi;
                r.psnr = 30.0 - pi;
                r.ssim = 0.8;
                records.push_back(r);
            }
    TTestResult t;
    t.metric = "mae";
    t.group = "whole_body";
    t.method_a = "proposed";
    t.method_b = "competitor";
    t.n = 4;
    t.t = -3.0;
    t.p = 0.05;
    emit_report(records, {t}, dir.path());

    auto count_lines = [](const std::string& path) {
        std::ifstream f(path);
        REQUIRE(f.good());
        int lines = 0;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) ++lines;
        return lines;
    };
    // 5 scope groups x 2 methods x 3 metrics + header.
    CHECK(count_lines(dir.file("district_table.csv")) == 31);
    // 1 lesion group x 2 methods x 3 metrics + header.
    CHECK(count_lines(dir.file("lesion_table.csv")) == 7);
    // 4 conditions x 2 methods x 3 metrics + header.
    CHECK(count_lines(dir.file("condition_table.csv")) == 25);
    CHECK(count_lines(dir.file("ttest_summary.csv")) == 2);
    CHECK(std::filesystem::exists(dir.file("district_table.txt")));
}

TEST_SUITE_END();
