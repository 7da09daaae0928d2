#include "vbody/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "vbody/districts.hpp"

namespace vbody {

namespace {

void check_region(const Volume& pred, const Volume& ref, const BinaryMask& region,
                  const char* op) {
    if (pred.dims != ref.dims || pred.dims != region.dims)
        throw ShapeError(std::string(op) + ": pred/ref/region grids differ");
    if (region.count_set() == 0)
        throw RegionError(std::string(op) + ": region is empty");
}

double region_mse(const Volume& pred, const Volume& ref, const BinaryMask& region) {
    double acc = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < region.indicator.size(); ++i)
        if (region.indicator[i]) {
            const double d = static_cast<double>(pred.data[i]) -
                             static_cast<double>(ref.data[i]);
            acc += d * d;
            ++n;
        }
    return acc / static_cast<double>(n);
}

// Separable Gaussian filtering with border renormalization. For the
// rectangular valid domains that arise at volume borders, per-axis
// renormalization composes to exact 3D renormalization.
class GaussianFilter3d {
public:
    GaussianFilter3d() {
        const int r = kSsimWindow / 2;
        double sum = 0.0;
        for (int i = -r; i <= r; ++i) {
            w_[static_cast<std::size_t>(i + r)] =
                std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
            sum += w_[static_cast<std::size_t>(i + r)];
        }
        for (double& w : w_) w /= sum;
    }

    std::vector<double> apply(const std::vector<double>& in, const Dims& dims) const {
        std::vector<double> a = filter_axis(in, dims, 0);
        std::vector<double> b = filter_axis(a, dims, 1);
        return filter_axis(b, dims, 2);
    }

private:
    std::vector<double> filter_axis(const std::vector<double>& in, const Dims& dims,
                                    int axis) const {
        const int r = kSsimWindow / 2;
        std::vector<double> out(in.size());
        const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
        const std::int64_t stride =
            axis == 0 ? 1 : (axis == 1 ? nx : nx * ny);
        const std::int64_t extent = dims[axis];
        for (std::int64_t z = 0; z < nz; ++z)
            for (std::int64_t y = 0; y < ny; ++y)
                for (std::int64_t x = 0; x < nx; ++x) {
                    const std::int64_t idx = x + nx * (y + ny * z);
                    const std::int64_t pos = axis == 0 ? x : (axis == 1 ? y : z);
                    double acc = 0.0, wsum = 0.0;
                    const int lo = static_cast<int>(std::max<std::int64_t>(-r, -pos));
                    const int hi = static_cast<int>(
                        std::min<std::int64_t>(r, extent - 1 - pos));
                    for (int k = lo; k <= hi; ++k) {
                        const double w = w_[static_cast<std::size_t>(k + r)];
                        acc += w * in[static_cast<std::size_t>(idx + k * stride)];
                        wsum += w;
                    }
                    out[static_cast<std::size_t>(idx)] = acc / wsum;
                }
        return out;
    }

    std::array<double, kSsimWindow> w_{};
};

struct MetricKey {
    std::string group;
    std::string method;
    Arch arch;
    bool operator<(const MetricKey& o) const {
        if (group != o.group) return group < o.group;
        if (method != o.method) return method < o.method;
        return static_cast<int>(arch) < static_cast<int>(o.arch);
    }
};

GroupStats stats_of(const std::vector<double>& values) {
    GroupStats s;
    std::vector<double> kept;
    for (double v : values) {
        if (std::isfinite(v))
            kept.push_back(v);
        else
            ++s.excluded;
    }
    s.n = static_cast<int>(kept.size());
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double v : kept) sum += v;
    s.mean = sum / s.n;
    if (s.n > 1) {
        double sq = 0.0;
        for (double v : kept) sq += (v - s.mean) * (v - s.mean);
        s.se = std::sqrt(sq / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

// Regularized incomplete beta via the modified Lentz continued fraction.
double incomplete_beta_cf(double x, double a, double b) {
    constexpr double kTiny = 1e-300;
    constexpr int kMaxIter = 500;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double dm = static_cast<double>(m);
        // even-step coefficient
        double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        result *= d * c;
        // odd-step coefficient
        num = -(a + dm) * (a + b + dm) * x /
              ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return result;
}

double regularized_incomplete_beta(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log(1.0 - x) -
                             (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(log_front) * incomplete_beta_cf(x, a, b) / a;
    return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b))) *
                     incomplete_beta_cf(1.0 - x, b, a) / b;
}

std::string format_p(double p) {
    char buf[32];
    if (p < 1e-12) return "<1e-12";
    std::snprintf(buf, sizeof(buf), "%.6g", p);
    return buf;
}

std::string format_stat(const GroupStats& s) {
    char buf[96];
    if (s.n == 0) return "n/a";
    std::snprintf(buf, sizeof(buf), "%.4f \xC2\xB1 %.4f", s.mean, s.se);
    return buf;
}

}  // namespace

double mae(const Volume& pred, const Volume& ref, const BinaryMask& region) {
    check_region(pred, ref, region, "mae");
    double acc = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < region.indicator.size(); ++i)
        if (region.indicator[i]) {
            acc += std::abs(static_cast<double>(pred.data[i]) -
                            static_cast<double>(ref.data[i]));
            ++n;
        }
    return acc / static_cast<double>(n);
}

double psnr(const Volume& pred, const Volume& ref, const BinaryMask& region) {
    check_region(pred, ref, region, "psnr");
    const double mse = region_mse(pred, ref, region);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim3d(const Volume& pred, const Volume& ref, const BinaryMask& region) {
    check_region(pred, ref, region, "ssim3d");
    // Bounding box of the region must host the window.
    Dims lo{pred.dims[0], pred.dims[1], pred.dims[2]}, hi{0, 0, 0};
    for (int z = 0; z < pred.dims[2]; ++z)
        for (int y = 0; y < pred.dims[1]; ++y)
            for (int x = 0; x < pred.dims[0]; ++x)
                if (region.indicator[region.index(x, y, z)]) {
                    lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
                    hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
                }
    for (int a = 0; a < 3; ++a)
        if (hi[a] - lo[a] + 1 < kSsimWindow)
            throw RegionError("ssim3d: region bounding box smaller than the " +
                              std::to_string(kSsimWindow) + "^3 window");

    const std::size_t n = pred.data.size();
    std::vector<double> px(n), rx(n), pxx(n), rxx(n), prx(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = pred.data[i], r = ref.data[i];
        px[i] = p;
        rx[i] = r;
        pxx[i] = p * p;
        rxx[i] = r * r;
        prx[i] = p * r;
    }
    static const GaussianFilter3d filter;
    const auto mu_p = filter.apply(px, pred.dims);
    const auto mu_r = filter.apply(rx, pred.dims);
    const auto e_pp = filter.apply(pxx, pred.dims);
    const auto e_rr = filter.apply(rxx, pred.dims);
    const auto e_pr = filter.apply(prx, pred.dims);

    constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    constexpr double kC2 = 0.03 * 0.03;
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!region.indicator[i]) continue;
        const double var_p = e_pp[i] - mu_p[i] * mu_p[i];
        const double var_r = e_rr[i] - mu_r[i] * mu_r[i];
        const double cov = e_pr[i] - mu_p[i] * mu_r[i];
        const double num = (2.0 * mu_p[i] * mu_r[i] + kC1) * (2.0 * cov + kC2);
        const double den =
            (mu_p[i] * mu_p[i] + mu_r[i] * mu_r[i] + kC1) * (var_p + var_r + kC2);
        acc += num / den;
        ++count;
    }
    return acc / static_cast<double>(count);
}

std::vector<MetricRecord> evaluate_patient(const Volume& pred,
                                           const PatientRecord& p,
                                           const std::string& method, Arch arch) {
    if (!p.pet)
        throw RegionError("evaluate_patient: patient '" + p.patient_id +
                          "' has no reference PET");
    if (pred.dims != p.ct.dims)
        throw ShapeError("evaluate_patient: prediction grid differs from patient grid");

    auto score = [&](const BinaryMask& region, const std::string& scope)
        -> std::optional<MetricRecord> {
        if (region.count_set() == 0) return std::nullopt;
        MetricRecord r;
        r.patient_id = p.patient_id;
        r.scope = scope;
        r.condition = p.condition;
        r.arch = arch;
        r.method = method;
        r.mae = mae(pred, *p.pet, region);
        r.psnr = psnr(pred, *p.pet, region);
        try {
            r.ssim = ssim3d(pred, *p.pet, region);
        } catch (const RegionError&) {
            r.ssim = std::numeric_limits<double>::quiet_NaN();
        }
        return r;
    };

    std::vector<MetricRecord> out;
    for (const BinaryMask& m : binary_masks(p.district_mask))
        if (auto r = score(m, district_name(m.district_id))) out.push_back(*r);
    if (auto r = score(body_mask(p.district_mask), "whole_body")) out.push_back(*r);
    if (p.lesion_mask)
        if (auto r = score(*p.lesion_mask, "lesion")) out.push_back(*r);
    return out;
}

CohortReport aggregate(const std::vector<MetricRecord>& records, GroupBy group_by) {
    if (records.empty()) throw ReportError("aggregate: no metric records");
    std::map<MetricKey, std::array<std::vector<double>, 3>> groups;
    for (const auto& r : records) {
        const std::string group = group_by == GroupBy::Scope
                                      ? r.scope
                                      : std::string(to_string(r.condition));
        auto& bucket = groups[{group, r.method, r.arch}];
        bucket[0].push_back(r.mae);
        bucket[1].push_back(r.psnr);
        bucket[2].push_back(r.ssim);
    }
    CohortReport report;
    report.group_by = group_by;
    for (auto& [key, bucket] : groups) {
        CohortRow row;
        row.group = key.group;
        row.method = key.method;
        row.arch = key.arch;
        row.mae = stats_of(bucket[0]);
        row.psnr = stats_of(bucket[1]);
        row.ssim = stats_of(bucket[2]);
        report.rows.push_back(std::move(row));
    }
    // Stable presentation order: districts, whole body, lesion; then the
    // paper's condition order.
    auto group_rank = [group_by](const std::string& g) {
        static const char* scope_order[] = {"head", "trunk", "arms",
                                            "legs", "whole_body", "lesion"};
        static const char* cond_order[] = {"LYMPHOMA", "NSCLC", "MELANOMA",
                                           "NEGATIVE_CONTROL"};
        if (group_by == GroupBy::Scope) {
            for (int i = 0; i < 6; ++i)
                if (g == scope_order[i]) return i;
        } else {
            for (int i = 0; i < 4; ++i)
                if (g == cond_order[i]) return i;
        }
        return 99;
    };
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [&](const CohortRow& a, const CohortRow& b) {
                         const int ra = group_rank(a.group), rb = group_rank(b.group);
                         if (ra != rb) return ra < rb;
                         if (a.method != b.method) return a.method < b.method;
                         return static_cast<int>(a.arch) < static_cast<int>(b.arch);
                     });
    return report;
}

double students_t_two_tailed_p(double t, int dof) {
    if (dof < 1) throw ParameterError("students_t_two_tailed_p: dof must be >= 1");
    if (std::isinf(t)) return 0.0;
    const double v = static_cast<double>(dof);
    return regularized_incomplete_beta(v / (t * t + v), v / 2.0, 0.5);
}

std::pair<double, double> paired_ttest(const std::vector<double>& a,
                                       const std::vector<double>& b) {
    if (a.size() != b.size())
        throw PairingError("paired_ttest: sample sizes differ (" +
                           std::to_string(a.size()) + " vs " +
                           std::to_string(b.size()) + ")");
    const int n = static_cast<int>(a.size());
    if (n < 2) throw PairingError("paired_ttest: need at least 2 pairs");
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += a[static_cast<std::size_t>(i)] -
                                        b[static_cast<std::size_t>(i)];
    mean /= n;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d =
            a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] - mean;
        sq += d * d;
    }
    const double sd = std::sqrt(sq / (n - 1));
    if (sd == 0.0) {
        if (mean == 0.0) return {0.0, 1.0};
        // Zero spread around a nonzero mean: report the p -> 0 sentinel.
        const double inf = std::numeric_limits<double>::infinity();
        return {mean > 0.0 ? inf : -inf, 0.0};
    }
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    return {t, students_t_two_tailed_p(t, n - 1)};
}

void emit_report(const std::vector<MetricRecord>& records,
                 const std::vector<TTestResult>& tests,
                 const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    auto write_level = [&](const std::string& name, const CohortReport& report) {
        const std::string csv_path = (fs::path(out_dir) / (name + ".csv")).string();
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write '" + csv_path + "'");
        csv << "group,method,arch,metric,n,excluded,mean,se\n";
        char buf[64];
        for (const auto& row : report.rows) {
            const std::array<std::pair<const char*, const GroupStats*>, 3> metrics{
                {{"mae", &row.mae}, {"psnr", &row.psnr}, {"ssim", &row.ssim}}};
            for (const auto& [metric, s] : metrics) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g", s->n, s->excluded,
                              s->mean, s->se);
                csv << row.group << ',' << row.method << ',' << to_string(row.arch)
                    << ',' << metric << ',' << buf << '\n';
            }
        }

        const std::string txt_path = (fs::path(out_dir) / (name + ".txt")).string();
        std::ofstream txt(txt_path, std::ios::trunc);
        txt << name << " (mean \xC2\xB1 standard error)\n";
        // Columns: one per (method, arch) pair present.
        std::vector<std::pair<std::string, Arch>> columns;
        for (const auto& row : report.rows) {
            const std::pair<std::string, Arch> col{row.method, row.arch};
            if (std::find(columns.begin(), columns.end(), col) == columns.end())
                columns.push_back(col);
        }
        txt << "group           metric ";
        for (const auto& [method, arch] : columns) {
            char head[64];
            std::snprintf(head, sizeof(head), "%-24s",
                          (method + "/" + to_string(arch)).c_str());
            txt << "| " << head;
        }
        txt << '\n';
        std::vector<std::string> groups;
        for (const auto& row : report.rows)
            if (std::find(groups.begin(), groups.end(), row.group) == groups.end())
                groups.push_back(row.group);
        for (const auto& group : groups) {
            for (const char* metric : {"mae", "psnr", "ssim"}) {
                char head[64];
                std::snprintf(head, sizeof(head), "%-15s %-6s ", group.c_str(),
                              metric);
                txt << head;
                for (const auto& [method, arch] : columns) {
                    std::string cell = "n/a";
                    for (const auto& row : report.rows)
                        if (row.group == group && row.method == method &&
                            row.arch == arch) {
                            const GroupStats& s =
                                metric == std::string("mae")
                                    ? row.mae
                                    : (metric == std::string("psnr") ? row.psnr
                                                                     : row.ssim);
                            cell = format_stat(s);
                        }
                    char body[64];
                    std::snprintf(body, sizeof(body), "%-24s", cell.c_str());
                    txt << "| " << body;
                }
                txt << '\n';
            }
        }
    };

    std::vector<MetricRecord> district_level, lesion_level, wholebody_level;
    for (const auto& r : records) {
        if (r.scope == "lesion")
            lesion_level.push_back(r);
        else
            district_level.push_back(r);
        if (r.scope == "whole_body") wholebody_level.push_back(r);
    }
    if (!district_level.empty())
        write_level("district_table", aggregate(district_level, GroupBy::Scope));
    if (!lesion_level.empty())
        write_level("lesion_table", aggregate(lesion_level, GroupBy::Scope));
    if (!wholebody_level.empty())
        write_level("condition_table", aggregate(wholebody_level, GroupBy::Condition));

    if (!tests.empty()) {
        const std::string path =
            (fs::path(out_dir) / "ttest_summary.csv").string();
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot write '" + path + "'");
        f << "metric,group,method_a,method_b,n,mean_a,mean_b,t,p\n";
        char buf[160];
        for (const auto& tst : tests) {
            std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.6g,%s", tst.n,
                          tst.mean_a, tst.mean_b, tst.t, format_p(tst.p).c_str());
            f << tst.metric << ',' << tst.group << ',' << tst.method_a << ','
              << tst.method_b << ',' << buf << '\n';
        }
    }
}

}  // namespace vbody
