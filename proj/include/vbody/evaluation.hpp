#pragma once

#include <string>
#include <vector>

#include "vbody/models.hpp"
#include "vbody/volume.hpp"

namespace vbody {

// Metric scopes are reported by name: "head", "trunk", "arms", "legs",
// "whole_body", "lesion".
struct MetricRecord {
    std::string patient_id;
    std::string scope;
    Condition condition = Condition::NegativeControl;
    Arch arch = Arch::Pix2Pix;
    std::string method;  // e.g. "proposed" or "competitor"
    double mae = 0.0;
    double psnr = 0.0;   // +inf when MSE == 0
    double ssim = 0.0;   // NaN when the region cannot host the SSIM window
};

// Mean |pred - ref| over region voxels, 64-bit accumulation.
double mae(const Volume& pred, const Volume& ref, const BinaryMask& region);

// 10*log10(MAX^2 / MSE) with MAX = 1 (normalized range); +inf on MSE == 0.
double psnr(const Volume& pred, const Volume& ref, const BinaryMask& region);

// Local-window SSIM with a 3D Gaussian window (7^3 taps, sigma = 1.5),
// K1 = 0.01, K2 = 0.03, L = 1; window weights renormalized at volume
// borders; the SSIM map is averaged over region voxels.
double ssim3d(const Volume& pred, const Volume& ref, const BinaryMask& region);

constexpr int kSsimWindow = 7;
constexpr double kSsimSigma = 1.5;

// Records for each nonempty district, the whole-body mask, and the lesion
// mask when present. Scopes that cannot be scored are skipped.
std::vector<MetricRecord> evaluate_patient(const Volume& pred,
                                           const PatientRecord& p,
                                           const std::string& method, Arch arch);

enum class GroupBy { Scope, Condition };

struct GroupStats {
    int n = 0;             // values included in the mean
    int excluded = 0;      // +inf PSNR / NaN SSIM entries left out
    double mean = 0.0;
    double se = 0.0;       // sample std (n-1) / sqrt(n); 0 when n == 1
};

struct CohortRow {
    std::string group;
    std::string method;
    Arch arch = Arch::Pix2Pix;
    GroupStats mae, psnr, ssim;
};

struct TTestResult {
    std::string metric;
    std::string group;
    std::string method_a, method_b;
    int n = 0;
    double t = 0.0;
    double p = 1.0;
    double mean_a = 0.0, mean_b = 0.0;
};

struct CohortReport {
    GroupBy group_by = GroupBy::Scope;
    std::vector<CohortRow> rows;
};

CohortReport aggregate(const std::vector<MetricRecord>& records, GroupBy group_by);

// t = mean(d) / (std(d)/sqrt(n)) on d = a - b; two-tailed p from Student's
// t with n-1 degrees of freedom. All-zero differences give (0, 1); zero
// spread with nonzero mean gives (+/-inf, 0), reported as p < 1e-12.
std::pair<double, double> paired_ttest(const std::vector<double>& a,
                                       const std::vector<double>& b);

// Two-tailed p for Student's t (exposed for the statistics path).
double students_t_two_tailed_p(double t, int dof);

// Writes district/whole-body, lesion, and condition tables (CSV +
// human-readable text) plus a t-test summary when tests are present.
void emit_report(const std::vector<MetricRecord>& records,
                 const std::vector<TTestResult>& tests,
                 const std::string& out_dir);

}  // namespace vbody
