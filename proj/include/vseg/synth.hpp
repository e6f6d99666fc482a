#pragma once

// Synthetic labeled cohorts: cubic skull-stripped "scans" with a brain
// ellipsoid, modality-specific tissue contrasts, and a nested tumor (edema
// shell ⊃ enhancing rim ⊃ necrotic core). Desk-scale stand-in for real data
// so the full pipeline can be exercised and verified quickly.

#include <cstdint>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

struct SynthConfig {
    std::int64_t n_cases = 5;
    std::int64_t size = 24; // cubic edge length, minimum 16
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    // Chance that a case carries no enhancing tumor at all (its whole core
    // becomes necrosis), mimicking lower-grade gliomas.
    double no_enhancing_fraction = 0.2;
    std::uint64_t seed = 0;
    int dataset_tag = 0;
};

// Deterministic: a fixed config yields a bit-identical cohort. Each case is
// generated from an independent rng stream derived from (seed, index), so
// cohorts of different lengths share their common prefix.
std::vector<Case> synth_cohort(const SynthConfig& cfg);
std::vector<Case> synth_cohort(std::int64_t n, std::int64_t size, std::uint64_t seed);

} // namespace vseg
