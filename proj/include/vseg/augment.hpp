#pragma once

// On-the-fly training augmentation: random rotation, isotropic scaling and
// elastic deformation (composed into a single displacement field, trilinear
// for images / nearest-neighbor for labels), gamma correction, and axis
// mirroring.

#include <array>

#include "vseg/data.hpp"
#include "vseg/rng.hpp"

namespace vseg {

struct AugmentConfig {
    std::array<double, 3> rotation_max_deg{15.0, 15.0, 15.0}; // per axis z,y,x
    std::array<double, 2> scale_range{0.85, 1.25};            // isotropic
    double elastic_grid_spacing = 8.0; // voxels between displacement control points
    double elastic_sigma = 2.0;        // gaussian displacement magnitude, voxels
    std::array<double, 2> gamma_range{0.7, 1.5};
    std::array<bool, 3> mirror_axes{true, true, true}; // eligible for flipping
    double transform_prob = 0.2; // applied independently to rotation/scale/elastic/gamma
    double mirror_prob = 0.5;    // per eligible axis

    void validate() const; // throws ConfigError
};

// Returns an augmented copy of the patch. Draws happen in a fixed order
// (rotation, scale, elastic, gamma, mirror), so output is a pure function of
// (input, cfg, rng state). When no spatial transform fires, image and labels
// pass through resampling-free, bit-exact.
Patch augment(const Patch& in, const AugmentConfig& cfg, Rng& rng);

} // namespace vseg
