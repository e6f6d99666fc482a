#include "vseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "vseg/errors.hpp"
#include "vseg/regions.hpp"
#include "vseg/textio.hpp"

namespace vseg {

namespace {

void check_pair(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
    if (pred.size() != ref.size()) throw ShapeError("metric inputs differ in size");
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] > 1 || ref[i] > 1) throw ValueError("metric inputs must be binary masks");
}

struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_pair(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
    check_pair(pred, ref);
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i], r = ref[i];
        c.tp += (p && r);
        c.fp += (p && !r);
        c.fn += (!p && r);
        c.tn += (!p && !r);
    }
    return c;
}

// Surface voxels — mask voxels with at least one face neighbor outside the
// mask (the volume edge counts as outside) — in millimeter coordinates.
std::vector<std::array<double, 3>> surface_points(std::span<const std::uint8_t> mask,
                                                  const std::array<std::int64_t, 3>& shape,
                                                  const std::array<double, 3>& spacing) {
    const std::int64_t D = shape[0], H = shape[1], W = shape[2];
    std::vector<std::array<double, 3>> pts;
    auto at = [&](std::int64_t z, std::int64_t y, std::int64_t x) -> bool {
        if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W) return false;
        return mask[static_cast<std::size_t>((z * H + y) * W + x)] != 0;
    };
    std::size_t i = 0;
    for (std::int64_t z = 0; z < D; ++z)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x, ++i) {
                if (!mask[i]) continue;
                const bool interior = at(z - 1, y, x) && at(z + 1, y, x) && at(z, y - 1, x) &&
                                      at(z, y + 1, x) && at(z, y, x - 1) && at(z, y, x + 1);
                if (!interior)
                    pts.push_back({static_cast<double>(z) * spacing[0],
                                   static_cast<double>(y) * spacing[1],
                                   static_cast<double>(x) * spacing[2]});
            }
    return pts;
}

// Linear-interpolation percentile of a sorted sample at rank q·(n−1).
double percentile(std::vector<double>& values, double q) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 1) return values[0];
    const double rank = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= n) return values[n - 1];
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double directed_perc95(const std::vector<std::array<double, 3>>& from,
                       const std::vector<std::array<double, 3>>& to) {
    std::vector<double> dists;
    dists.reserve(from.size());
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to) {
            const double dz = a[0] - b[0], dy = a[1] - b[1], dx = a[2] - b[2];
            best = std::min(best, dz * dz + dy * dy + dx * dx);
            if (best == 0.0) break;
        }
        dists.push_back(std::sqrt(best));
    }
    return percentile(dists, 0.95);
}

} // namespace

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
    const Counts c = count_pair(pred, ref);
    const std::int64_t p = c.tp + c.fp, r = c.tp + c.fn;
    if (p == 0 && r == 0) return 1.0;
    if (p == 0 || r == 0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(p + r);
}

double sensitivity(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
    const Counts c = count_pair(pred, ref);
    if (c.tp + c.fn == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
    const Counts c = count_pair(pred, ref);
    if (c.tn + c.fp == 0) return 1.0;
    return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

double hd95(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref,
            const std::array<std::int64_t, 3>& shape, const std::array<double, 3>& spacing,
            double empty_sentinel) {
    check_pair(pred, ref);
    if (static_cast<std::int64_t>(pred.size()) != shape[0] * shape[1] * shape[2])
        throw ShapeError("hd95: mask size does not match shape");
    const bool p_empty = std::find(pred.begin(), pred.end(), 1) == pred.end();
    const bool r_empty = std::find(ref.begin(), ref.end(), 1) == ref.end();
    if (p_empty && r_empty) return 0.0;
    if (p_empty || r_empty) {
        if (empty_sentinel >= 0.0) return empty_sentinel;
        double diag = 0.0;
        for (int d = 0; d < 3; ++d) {
            const double ext = static_cast<double>(shape[d] - 1) * spacing[d];
            diag += ext * ext;
        }
        return std::sqrt(diag);
    }
    const auto sp = surface_points(pred, shape, spacing);
    const auto sr = surface_points(ref, shape, spacing);
    return std::max(directed_perc95(sp, sr), directed_perc95(sr, sp));
}

CaseMetrics compute_case_metrics(const LabelVolume& pred, const LabelVolume& ref,
                                 double empty_sentinel) {
    if (pred.shape != ref.shape) throw ShapeError("case metrics: prediction/reference shapes differ");
    if (pred.spacing != ref.spacing)
        throw ShapeError("case metrics: prediction/reference spacings differ");
    const RegionMaps p = labels_to_regions(pred);
    const RegionMaps r = labels_to_regions(ref);
    auto one = [&](const std::vector<std::uint8_t>& pm, const std::vector<std::uint8_t>& rm) {
        RegionMetrics m;
        m.dice = dice(pm, rm);
        m.hd95 = hd95(pm, rm, pred.shape, pred.spacing, empty_sentinel);
        m.sensitivity = sensitivity(pm, rm);
        m.specificity = specificity(pm, rm);
        return m;
    };
    CaseMetrics out;
    out.et = one(p.et, r.et);
    out.wt = one(p.wt, r.wt);
    out.tc = one(p.tc, r.tc);
    return out;
}

namespace {

// Flattened column view in report order so aggregation loops once.
std::array<double, 12> columns(const CaseMetrics& m) {
    return {m.et.dice,        m.wt.dice,        m.tc.dice,        m.et.hd95,
            m.wt.hd95,        m.tc.hd95,        m.et.sensitivity, m.wt.sensitivity,
            m.tc.sensitivity, m.et.specificity, m.wt.specificity, m.tc.specificity};
}

CaseMetrics from_columns(const std::array<double, 12>& c) {
    CaseMetrics m;
    m.et.dice = c[0];
    m.wt.dice = c[1];
    m.tc.dice = c[2];
    m.et.hd95 = c[3];
    m.wt.hd95 = c[4];
    m.tc.hd95 = c[5];
    m.et.sensitivity = c[6];
    m.wt.sensitivity = c[7];
    m.tc.sensitivity = c[8];
    m.et.specificity = c[9];
    m.wt.specificity = c[10];
    m.tc.specificity = c[11];
    return m;
}

} // namespace

CohortReport evaluate_cohort(const std::vector<LabelVolume>& preds,
                             const std::vector<LabelVolume>& refs,
                             const std::vector<std::string>& ids) {
    if (preds.empty()) throw ContractError("evaluate_cohort: empty case list");
    if (preds.size() != refs.size())
        throw ContractError("evaluate_cohort: prediction/reference lists differ in length");
    if (!ids.empty() && ids.size() != preds.size())
        throw ContractError("evaluate_cohort: id list does not match case count");

    CohortReport rep;
    const std::size_t n = preds.size();
    for (std::size_t i = 0; i < n; ++i) {
        rep.ids.push_back(ids.empty() ? "case" + std::to_string(i) : ids[i]);
        rep.cases.push_back(compute_case_metrics(preds[i], refs[i]));
    }

    std::array<double, 12> mean{}, var{}, med{};
    for (int k = 0; k < 12; ++k) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = columns(rep.cases[i])[static_cast<std::size_t>(k)];
        double s = 0.0;
        for (double v : col) s += v;
        mean[k] = s / static_cast<double>(n);
        double sq = 0.0;
        for (double v : col) sq += (v - mean[k]) * (v - mean[k]);
        var[k] = sq / static_cast<double>(n); // population: single case -> 0
        std::sort(col.begin(), col.end());
        med[k] = (n % 2 == 1) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    rep.mean = from_columns(mean);
    std::array<double, 12> sd{};
    for (int k = 0; k < 12; ++k) sd[k] = std::sqrt(var[k]);
    rep.stddev = from_columns(sd);
    rep.median = from_columns(med);
    return rep;
}

std::string metric_conventions() {
    return "hd95_combine=max_directed percentile=linear_rank_0.95*(n-1) "
           "surface=face_neighbors_6conn hd95_empty_sentinel=volume_diagonal_mm "
           "empty_dice=both1_one0 empty_rate_denominator=1";
}

void write_report(const CohortReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "# " << metric_conventions() << '\n';
    out << "id";
    const char* regions[3] = {"enh", "whole", "core"};
    const char* names[4] = {"dice", "hd95", "sens", "spec"};
    for (const char* metric : names)
        for (const char* region : regions) out << '\t' << metric << '_' << region;
    out << '\n';
    auto row = [&](const std::string& id, const CaseMetrics& m) {
        out << id;
        for (double v : columns(m)) out << '\t' << fmt_double(v);
        out << '\n';
    };
    for (std::size_t i = 0; i < report.cases.size(); ++i) row(report.ids[i], report.cases[i]);
    row("Mean", report.mean);
    row("StdDev", report.stddev);
    row("Median", report.median);
    if (!out) throw ParseError(path + ": write failed");
}

} // namespace vseg
