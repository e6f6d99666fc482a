#pragma once

// Case preprocessing and patch extraction for training.
//
// Normalization statistics are computed per modality over the nonzero
// brain mask only, and voxels outside the mask stay exactly zero so the
// background remains a fixed reference value after standardization.

#include <array>
#include <cstdint>
#include <vector>

#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

// Standardizes each modality in place: subtract the mean and divide by the
// population standard deviation of the voxels where the modality is nonzero.
// Voxels that were exactly zero stay exactly zero. Throws DegenerateError
// (naming the modality) when a modality has no nonzero voxels or zero
// variance over them.
void normalize_case(Case& c);

// A cubic training patch: channel-major image data (4 modalities, each
// size^3 voxels, x fastest) plus the matching label block.
struct Patch {
    std::int64_t size = 0;
    std::vector<float> image;        // kNumModalities * size^3
    std::vector<std::uint8_t> labels; // size^3

    std::int64_t voxels_per_channel() const { return size * size * size; }
};

// Cuts a patch whose corner is drawn uniformly over the feasible positions
// of each axis. When the case is smaller than the patch along an axis,
// feasible positions are all placements containing the whole volume
// (negative corners), and the surplus is padded with zeros (image) /
// background (labels). The case must carry a label volume.
Patch sample_patch(const Case& c, std::int64_t patch_size, Rng& rng);

// Deterministic variant used for validation: the patch is centered on the
// volume (corner = floor((dim - patch)/2) per axis, clamped to 0).
Patch center_patch(const Case& c, std::int64_t patch_size);

} // namespace vseg
