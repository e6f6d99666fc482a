#pragma once

// Challenge evaluation metrics over the three tumor regions: Dice,
// 95th-percentile Hausdorff distance (mm), sensitivity, specificity, with
// cohort aggregation (mean / std-dev / median) and a TSV report.
//
// Conventions (all stated in the report header and by metric_conventions()):
//   - empty-set Dice/sensitivity/specificity: both empty → 1, one empty → 0
//     (for dice); empty denominators → 1
//   - hd95 combines directions as max(perc95(P→R), perc95(R→P))
//   - surfaces use 6-connectivity face neighbors; distances are
//     spacing-aware Euclidean millimeters
//   - percentile is linear interpolation at rank 0.95·(n−1)
//   - hd95 with exactly one empty mask returns a sentinel, by default the
//     volume diagonal in mm (pass a nonnegative value to override); both
//     empty → 0

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// Negative sentinel request = use the volume diagonal.
inline constexpr double kDiagonalSentinel = -1.0;

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);
double sensitivity(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);
double specificity(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);
double hd95(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref,
            const std::array<std::int64_t, 3>& shape, const std::array<double, 3>& spacing,
            double empty_sentinel = kDiagonalSentinel);

struct RegionMetrics {
    double dice = 0.0;
    double hd95 = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

// Region order follows the challenge reports: enhancing, whole, core.
struct CaseMetrics {
    RegionMetrics et, wt, tc;
};

CaseMetrics compute_case_metrics(const LabelVolume& pred, const LabelVolume& ref,
                                 double empty_sentinel = kDiagonalSentinel);

struct CohortReport {
    std::vector<std::string> ids;
    std::vector<CaseMetrics> cases;
    CaseMetrics mean, stddev, median; // aggregated column-wise
};

// Computes per-case metrics and aggregates. ids, when given, must align with
// the case lists; otherwise cases are numbered. Misaligned lists → contract
// error.
CohortReport evaluate_cohort(const std::vector<LabelVolume>& preds,
                             const std::vector<LabelVolume>& refs,
                             const std::vector<std::string>& ids = {});

// Tab-separated table: a '#' header naming every convention knob, a column
// header (Dice then HD95 then sensitivity then specificity, each enh/whole/
// core), one row per case, then Mean / StdDev / Median rows.
void write_report(const CohortReport& report, const std::string& path);

// One line describing the convention knobs; printed by the CLI's --version.
std::string metric_conventions();

} // namespace vseg
