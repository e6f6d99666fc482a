#pragma once

// Full-volume prediction on frozen nets: symmetric zero-padding to the
// net's downsampling divisibility (cropped back afterwards), mirror
// test-time augmentation over all 2^3 axis-flip combinations, uniform
// probability-map ensembling, and prediction file IO.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/layers.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct Prediction {
    Tensor<float> probs; // [K, D, H, W]; softmax: per-voxel sum 1; sigmoid: each in [0,1]
    HeadMode head_mode = HeadMode::Softmax;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::string case_id;
    std::vector<std::string> provenance; // one entry per contributing prediction pass
};

inline constexpr std::uint64_t kDefaultMemoryBudget = std::uint64_t{4} << 30;

// Single forward pass over the whole (padded) case through the selected
// head. The case must already be normalized. Throws CapacityError with a
// tiling suggestion when the activation estimate exceeds budget_bytes.
Prediction predict_volume(const UNet<float>& net, const Case& c, int head_index = 0,
                          std::uint64_t budget_bytes = kDefaultMemoryBudget);

// Mirror TTA: the 8 flip subsets are predicted in a fixed order (index bit 0
// flips x, bit 1 flips y, bit 2 flips z), un-flipped back, and averaged.
Prediction predict_tta(const UNet<float>& net, const Case& c, int head_index = 0,
                       std::uint64_t budget_bytes = kDefaultMemoryBudget);

// Voxelwise arithmetic mean in input-index order; provenance concatenates.
// Mixed head_mode → ContractError; shape mismatch → ShapeError.
Prediction ensemble(const std::vector<Prediction>& preds);

// Hard labels from probabilities: softmax heads take the per-voxel argmax
// class (first index on ties) mapped through kClassLabels; 3-channel sigmoid
// heads decode hierarchically via regions_to_labels under the given
// threshold (which the softmax path ignores).
LabelVolume predicted_labels(const Prediction& p, float threshold = 0.5f);

// A prediction on disk is one VSEG1 f32 volume per channel
// (<id>_prob<k>.vseg) plus a text sidecar <id>_pred.txt carrying head_mode
// and provenance.
void write_prediction(const Prediction& p, const std::string& dir);
Prediction read_prediction(const std::string& dir, const std::string& id);

// Mirrors every volume of a case (and its labels) along the given axes;
// used by TTA and its equivariance tests.
Case flip_case(const Case& c, const std::array<bool, 3>& axes);

} // namespace vseg
