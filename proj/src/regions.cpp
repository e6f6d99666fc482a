#include "vseg/regions.hpp"

#include <algorithm>
#include <fstream>

#include "vseg/errors.hpp"
#include "vseg/textio.hpp"

namespace vseg {

int class_of_label(std::uint8_t label) {
    switch (label) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: throw ValueError("label value " + std::to_string(int(label)) + " outside {0,1,2,4}");
    }
}

RegionMaps labels_to_regions(const LabelVolume& l) {
    RegionMaps r;
    r.shape = l.shape;
    r.spacing = l.spacing;
    const std::size_t n = l.data.size();
    r.wt.resize(n);
    r.tc.resize(n);
    r.et.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t v = l.data[i];
        switch (v) {
        case 0: r.wt[i] = 0; r.tc[i] = 0; r.et[i] = 0; break;
        case 1: r.wt[i] = 1; r.tc[i] = 1; r.et[i] = 0; break;
        case 2: r.wt[i] = 1; r.tc[i] = 0; r.et[i] = 0; break;
        case 4: r.wt[i] = 1; r.tc[i] = 1; r.et[i] = 1; break;
        default: throw ValueError("label value " + std::to_string(int(v)) + " outside {0,1,2,4}");
        }
    }
    return r;
}

LabelVolume regions_to_labels(std::span<const float> wt, std::span<const float> tc,
                              std::span<const float> et, const std::array<std::int64_t, 3>& shape,
                              const std::array<double, 3>& spacing, float threshold) {
    const std::int64_t n = shape[0] * shape[1] * shape[2];
    if (static_cast<std::int64_t>(wt.size()) != n || static_cast<std::int64_t>(tc.size()) != n ||
        static_cast<std::int64_t>(et.size()) != n)
        throw ShapeError("regions_to_labels: channel length does not match shape");
    LabelVolume out;
    out.shape = shape;
    out.spacing = spacing;
    out.data.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint8_t v;
        if (wt[i] < threshold) v = 0;
        else if (tc[i] < threshold) v = 2;
        else if (et[i] < threshold) v = 1;
        else v = 4;
        out.data[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

LabelVolume apply_et_rule(const LabelVolume& l, const PostprocessRule& rule) {
    std::int64_t count = 0;
    for (auto v : l.data) count += (v == 4);
    LabelVolume out = l;
    if (count < rule.et_min_voxels)
        for (auto& v : out.data)
            if (v == 4) v = 1;
    return out;
}

namespace {

// Enhancing-tumor Dice under the rule at threshold t, from precomputed
// per-case counts: a prediction below the threshold counts as empty.
double et_dice_at(std::int64_t pred, std::int64_t ref, std::int64_t inter, std::int64_t t) {
    const std::int64_t p = (pred < t) ? 0 : pred;
    if (p == 0 && ref == 0) return 1.0;
    if (p == 0 || ref == 0) return 0.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + ref);
}

} // namespace

PostprocessRule optimize_threshold(const std::vector<LabelVolume>& predictions,
                                   const std::vector<LabelVolume>& references) {
    if (predictions.empty() || references.empty())
        throw ContractError("optimize_threshold: empty case list");
    if (predictions.size() != references.size())
        throw ContractError("optimize_threshold: prediction/reference lists differ in length");

    const std::size_t n = predictions.size();
    std::vector<std::int64_t> pred_count(n, 0), ref_count(n, 0), inter(n, 0);
    std::vector<std::int64_t> candidates{0};
    for (std::size_t i = 0; i < n; ++i) {
        if (predictions[i].shape != references[i].shape)
            throw ShapeError("optimize_threshold: case " + std::to_string(i) +
                             " prediction/reference shapes differ");
        for (std::size_t j = 0; j < predictions[i].data.size(); ++j) {
            const bool p = predictions[i].data[j] == 4;
            const bool r = references[i].data[j] == 4;
            pred_count[i] += p;
            ref_count[i] += r;
            inter[i] += (p && r);
        }
        candidates.push_back(pred_count[i]);
        candidates.push_back(pred_count[i] + 1);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::int64_t best_t = 0;
    double best_mean = -1.0;
    for (std::int64_t t : candidates) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += et_dice_at(pred_count[i], ref_count[i], inter[i], t);
        const double mean = total / static_cast<double>(n);
        if (mean > best_mean) { // strict: ascending candidates keep ties at the smallest t
            best_mean = mean;
            best_t = t;
        }
    }
    return PostprocessRule{best_t};
}

void write_rule(const PostprocessRule& rule, const std::string& path) {
    if (rule.et_min_voxels < 0) throw ValueError("et_min_voxels must be nonnegative");
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "et_min_voxels=" << rule.et_min_voxels << '\n';
    if (!out) throw ParseError(path + ": write failed");
}

PostprocessRule read_rule(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty rule file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string key = "et_min_voxels=";
    if (line.rfind(key, 0) != 0) throw ParseError(path + ": expected '" + key + "<n>', found '" + line + "'");
    PostprocessRule rule;
    rule.et_min_voxels = parse_int(line.substr(key.size()), path + " et_min_voxels");
    if (rule.et_min_voxels < 0) throw ParseError(path + ": negative et_min_voxels");
    return rule;
}

} // namespace vseg
