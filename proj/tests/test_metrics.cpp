#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "vseg/errors.hpp"
#include "vseg/metrics.hpp"
#include "vseg/rng.hpp"

using namespace vseg;

namespace {

using Mask = std::vector<std::uint8_t>;

Mask random_mask(std::int64_t n, Rng& rng, double p) {
    Mask m(static_cast<std::size_t>(n));
    for (auto& v : m) v = rng.bernoulli(p);
    return m;
}

// Independent oracle: surfaces by 6-neighbor scan, every pairwise distance,
// percentile by the linear-interpolation rule, computed with none of the
// library's shortcuts.
double brute_hd95(const Mask& a, const Mask& b, const std::array<std::int64_t, 3>& shape,
                  const std::array<double, 3>& spacing) {
    auto surface = [&](const Mask& m) {
        std::vector<std::array<double, 3>> pts;
        const std::int64_t D = shape[0], H = shape[1], W = shape[2];
        for (std::int64_t z = 0; z < D; ++z)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x) {
                    if (!m[(z * H + y) * W + x]) continue;
                    bool surf = false;
                    const std::int64_t nb[6][3] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                                   {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
                    for (const auto& q : nb) {
                        if (q[0] < 0 || q[0] >= D || q[1] < 0 || q[1] >= H || q[2] < 0 ||
                            q[2] >= W || !m[(q[0] * H + q[1]) * W + q[2]])
                            surf = true;
                    }
                    if (surf)
                        pts.push_back({z * spacing[0], y * spacing[1], x * spacing[2]});
                }
        return pts;
    };
    auto directed = [](const std::vector<std::array<double, 3>>& from,
                       const std::vector<std::array<double, 3>>& to) {
        std::vector<double> d;
        for (const auto& p : from) {
            double best = 1e300;
            for (const auto& q : to)
                best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
            d.push_back(best);
        }
        std::sort(d.begin(), d.end());
        const double rank = 0.95 * static_cast<double>(d.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(rank);
        if (lo + 1 >= d.size()) return d.back();
        return d[lo] + (rank - lo) * (d[lo + 1] - d[lo]);
    };
    const auto sa = surface(a), sb = surface(b);
    const bool ae = sa.empty(), be = sb.empty();
    if (ae && be) return 0.0;
    if (ae || be) {
        double diag = 0.0;
        for (int d = 0; d < 3; ++d) diag += std::pow((shape[d] - 1) * spacing[d], 2);
        return std::sqrt(diag);
    }
    return std::max(directed(sa, sb), directed(sb, sa));
}

} // namespace

TEST_CASE("dice: overlap arithmetic and empty-set conventions") {
    const Mask two_a{1, 1, 0, 0}, two_b{0, 1, 1, 0}, empty{0, 0, 0, 0};
    CHECK(dice(two_a, two_a) == 1.0);
    CHECK(dice(two_a, two_b) == 0.5); // 2 voxels each, 1 overlapping
    CHECK(dice(empty, empty) == 1.0);
    CHECK(dice(two_a, empty) == 0.0);
    CHECK(dice(empty, two_a) == 0.0);
    CHECK_THROWS_AS(dice(two_a, Mask{1, 0}), ShapeError);
    CHECK_THROWS_AS(dice(Mask{2, 0}, Mask{1, 0}), ValueError);
}

TEST_CASE("dice is symmetric and 1 only on equal masks") {
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        const Mask a = random_mask(27, rng, 0.4), b = random_mask(27, rng, 0.4);
        CHECK(dice(a, b) == dice(b, a));
        if (dice(a, b) == 1.0) CHECK(a == b);
        if (a == b) CHECK(dice(a, b) == 1.0);
    }
}

TEST_CASE("sensitivity and specificity with conventions") {
    const Mask ref{1, 1, 0, 0}, all{1, 1, 1, 1}, none{0, 0, 0, 0};
    CHECK(sensitivity(ref, ref) == 1.0);
    CHECK(specificity(ref, ref) == 1.0);
    // all-positive prediction on half-positive reference
    CHECK(sensitivity(all, ref) == 1.0);
    CHECK(specificity(all, ref) == 0.0);
    // empty denominators
    CHECK(sensitivity(none, none) == 1.0);
    CHECK(specificity(all, all) == 1.0);
    // half the positives found
    CHECK(sensitivity(Mask{1, 0, 0, 0}, ref) == 0.5);
}

TEST_CASE("hd95 hand cases") {
    const std::array<std::int64_t, 3> shape{1, 1, 5};
    const std::array<double, 3> unit{1, 1, 1};
    Mask a(5, 0), b(5, 0);
    a[0] = 1;
    b[3] = 1; // two single voxels 3 apart on one axis
    CHECK(hd95(a, b, shape, unit) == doctest::Approx(3.0));
    CHECK(hd95(a, a, shape, unit) == 0.0);
    // spacing-aware: same voxels, 2mm x-spacing -> 6mm
    CHECK(hd95(a, b, shape, {1, 1, 2}) == doctest::Approx(6.0));
    // both empty -> 0; one empty -> volume diagonal by default
    const Mask empty(5, 0);
    CHECK(hd95(empty, empty, shape, unit) == 0.0);
    CHECK(hd95(a, empty, shape, unit) == doctest::Approx(4.0)); // diagonal of 1x1x5 grid
    CHECK(hd95(a, empty, shape, unit, 123.0) == 123.0);         // explicit sentinel
}

TEST_CASE("hd95 matches the all-pairs brute-force oracle on random masks") {
    Rng rng(314);
    const std::array<std::int64_t, 3> shape{5, 6, 4};
    const std::array<double, 3> spacing{1.0, 1.5, 0.8};
    const std::int64_t n = shape[0] * shape[1] * shape[2];
    for (int t = 0; t < 40; ++t) {
        const double p = rng.uniform(0.05, 0.6);
        const Mask a = random_mask(n, rng, p), b = random_mask(n, rng, p);
        const double got = hd95(a, b, shape, spacing);
        const double want = brute_hd95(a, b, shape, spacing);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("hd95 never exceeds the exact Hausdorff distance") {
    Rng rng(99);
    const std::array<std::int64_t, 3> shape{4, 4, 4};
    const std::array<double, 3> spacing{1, 1, 1};
    for (int t = 0; t < 20; ++t) {
        Mask a = random_mask(64, rng, 0.3), b = random_mask(64, rng, 0.3);
        if (std::find(a.begin(), a.end(), 1) == a.end() ||
            std::find(b.begin(), b.end(), 1) == b.end())
            continue;
        // exact Hausdorff = percentile at 1.0 == max directed distance
        auto max_directed = [&](const Mask& from, const Mask& to) {
            double worst = 0.0;
            for (std::int64_t i = 0; i < 64; ++i) {
                if (!from[i]) continue;
                double best = 1e300;
                for (std::int64_t j = 0; j < 64; ++j) {
                    if (!to[j]) continue;
                    const double dz = i / 16 - j / 16, dy = (i / 4) % 4 - (j / 4) % 4,
                                 dx = i % 4 - j % 4;
                    best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
                }
                worst = std::max(worst, best);
            }
            return worst;
        };
        const double exact_h = std::max(max_directed(a, b), max_directed(b, a));
        CHECK(hd95(a, b, shape, spacing) <= exact_h + 1e-12);
    }
}

TEST_CASE("metrics are translation invariant") {
    Rng rng(55);
    const std::array<std::int64_t, 3> shape{6, 6, 6};
    const std::array<double, 3> spacing{1.0, 1.2, 0.9};
    // small random blobs in the low corner, then the same blobs shifted by
    // (1,1,1)
    Mask a(216, 0), b(216, 0), at(216, 0), bt(216, 0);
    for (int t = 0; t < 12; ++t) {
        const auto z = rng.uniform_int(0, 3), y = rng.uniform_int(0, 3), x = rng.uniform_int(0, 3);
        ((t % 2 == 0) ? a : b)[(z * 6 + y) * 6 + x] = 1;
        ((t % 2 == 0) ? at : bt)[((z + 1) * 6 + y + 1) * 6 + x + 1] = 1;
    }
    CHECK(dice(a, b) == dice(at, bt));
    CHECK(sensitivity(a, b) == sensitivity(at, bt));
    CHECK(specificity(a, b) == doctest::Approx(specificity(at, bt)).epsilon(1e-12));
    CHECK(hd95(a, b, shape, spacing) == doctest::Approx(hd95(at, bt, shape, spacing)).epsilon(1e-12));
}

TEST_CASE("case metrics split labels into the three regions") {
    LabelVolume pred, ref;
    pred.shape = ref.shape = {1, 2, 3};
    pred.spacing = ref.spacing = {1, 1, 1};
    ref.data = {4, 1, 2, 0, 0, 0};
    pred.data = {4, 1, 2, 0, 0, 0};
    const CaseMetrics perfect = compute_case_metrics(pred, ref);
    CHECK(perfect.et.dice == 1.0);
    CHECK(perfect.wt.dice == 1.0);
    CHECK(perfect.tc.dice == 1.0);
    CHECK(perfect.et.hd95 == 0.0);

    // drop the enhancing voxel to necrosis: wt and tc unchanged, et empty
    pred.data = {1, 1, 2, 0, 0, 0};
    const CaseMetrics m = compute_case_metrics(pred, ref);
    CHECK(m.wt.dice == 1.0);
    CHECK(m.tc.dice == 1.0);
    CHECK(m.et.dice == 0.0);
    CHECK(m.et.sensitivity == 0.0);
    CHECK(m.et.specificity == 1.0);

    pred.shape = {2, 1, 3};
    CHECK_THROWS_AS(compute_case_metrics(pred, ref), ShapeError);
}

TEST_CASE("cohort aggregation: single case and hand-computed trio") {
    LabelVolume a;
    a.shape = {1, 1, 4};
    a.spacing = {1, 1, 1};
    a.data = {4, 2, 1, 0};
    const CohortReport single = evaluate_cohort({a}, {a});
    CHECK(single.mean.wt.dice == 1.0);
    CHECK(single.median.wt.dice == 1.0);
    CHECK(single.stddev.wt.dice == 0.0);
    CHECK(single.mean.et.hd95 == 0.0);

    // three cases with whole-tumor Dice 1, 1, and 2*2/(2+3) = 0.8
    LabelVolume b = a, pb = a;
    pb.data = {4, 2, 0, 0};
    b.data = {4, 2, 2, 0};
    LabelVolume c = a;
    const CohortReport rep = evaluate_cohort({a, pb, c}, {a, b, c}, {"x", "y", "z"});
    const double d3 = 0.8;
    CHECK(rep.cases[1].wt.dice == doctest::Approx(d3));
    CHECK(rep.mean.wt.dice == doctest::Approx((1.0 + d3 + 1.0) / 3.0));
    CHECK(rep.median.wt.dice == 1.0);
    const double mu = (2.0 + d3) / 3.0;
    const double var = (2.0 * (1.0 - mu) * (1.0 - mu) + (d3 - mu) * (d3 - mu)) / 3.0;
    CHECK(rep.stddev.wt.dice == doctest::Approx(std::sqrt(var)));

    CHECK_THROWS_AS(evaluate_cohort({}, {}), ContractError);
    CHECK_THROWS_AS(evaluate_cohort({a}, {a, b}), ContractError);
    CHECK_THROWS_AS(evaluate_cohort({a}, {a}, {"p", "q"}), ContractError);
}

TEST_CASE("report file carries convention knobs and fixed column order") {
    LabelVolume a;
    a.shape = {1, 1, 2};
    a.spacing = {1, 1, 1};
    a.data = {4, 0};
    const CohortReport rep = evaluate_cohort({a}, {a}, {"c0"});
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "vseg_report_test.tsv").string();
    write_report(rep, path);
    std::ifstream in(path);
    std::string knobs, header, row;
    std::getline(in, knobs);
    std::getline(in, header);
    std::getline(in, row);
    CHECK(knobs.find("hd95_combine=max") != std::string::npos);
    CHECK(knobs.find("percentile=linear") != std::string::npos);
    CHECK(header.rfind("id\tdice_enh\tdice_whole\tdice_core\thd95_enh", 0) == 0);
    CHECK(row.rfind("c0\t1\t1\t1\t0", 0) == 0);
    // case rows + Mean/StdDev/Median
    int lines = 3;
    std::string rest;
    while (std::getline(in, rest)) ++lines;
    CHECK(lines == 6);
    fs::remove(path);
}
