#pragma once

// Conversion between challenge labels {0,1,2,4} and the three nested
// evaluation regions (whole tumor, tumor core, enhancing tumor), plus the
// minimum-size postprocessing rule for enhancing tumor and its threshold
// search.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

// Label value carried by softmax class index 0..3.
inline constexpr std::array<std::uint8_t, 4> kClassLabels = {0, 1, 2, 4};

// Inverse of kClassLabels; throws ValueError for anything outside {0,1,2,4}.
int class_of_label(std::uint8_t label);

// Binary masks (0/1) of the three overlapping regions. When derived from a
// label volume they nest: et ⊆ tc ⊆ wt.
struct RegionMaps {
    std::array<std::int64_t, 3> shape{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> wt; // labels {1,2,4}
    std::vector<std::uint8_t> tc; // labels {1,4}
    std::vector<std::uint8_t> et; // label {4}
};

RegionMaps labels_to_regions(const LabelVolume& l);

// Decodes per-voxel region probabilities (channels ordered wt, tc, et) into
// a label volume by hierarchical gating: wt < threshold → background, else
// tc < threshold → edema (2), else et < threshold → necrosis/non-enhancing
// (1), else enhancing (4). This ordering makes decode invert encode on
// binarized region maps.
LabelVolume regions_to_labels(std::span<const float> wt, std::span<const float> tc,
                              std::span<const float> et, const std::array<std::int64_t, 3>& shape,
                              const std::array<double, 3>& spacing, float threshold = 0.5f);

struct PostprocessRule {
    std::int64_t et_min_voxels = 0;
};

// If the volume holds fewer than rule.et_min_voxels enhancing voxels
// (strict less-than), relabels all of them as necrosis (4 → 1); otherwise
// returns the input unchanged. Idempotent.
LabelVolume apply_et_rule(const LabelVolume& l, const PostprocessRule& rule);

// Picks the et_min_voxels threshold maximizing the mean enhancing-tumor
// Dice over the cohort after applying the rule, using the empty-set
// convention (both empty → 1, one empty → 0). Mean Dice is piecewise
// constant in the threshold with breakpoints only at observed ET counts, so
// the candidate set {0} ∪ {count per case} ∪ {count+1 per case} is
// exhaustive. Ties go to the smallest threshold. Throws ContractError on
// empty lists and ShapeError on misaligned cases.
PostprocessRule optimize_threshold(const std::vector<LabelVolume>& predictions,
                                   const std::vector<LabelVolume>& references);

// One-line text persistence: "et_min_voxels=<n>".
void write_rule(const PostprocessRule& rule, const std::string& path);
PostprocessRule read_rule(const std::string& path);

} // namespace vseg
