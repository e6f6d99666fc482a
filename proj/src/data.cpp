#include "vseg/data.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/errors.hpp"

namespace vseg {

void normalize_case(Case& c) {
    c.validate();
    for (int m = 0; m < kNumModalities; ++m) {
        auto& vol = c.modalities[m];
        double sum = 0.0;
        std::int64_t count = 0;
        for (float v : vol.data) {
            if (v != 0.0f) {
                sum += v;
                ++count;
            }
        }
        if (count == 0)
            throw DegenerateError("normalize_case: case " + c.id + " modality " + modality_name(m) +
                                  " has no nonzero voxels");
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (float v : vol.data) {
            if (v != 0.0f) {
                const double d = v - mean;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(count);
        if (!(var > 0.0))
            throw DegenerateError("normalize_case: case " + c.id + " modality " + modality_name(m) +
                                  " has zero variance over its nonzero voxels");
        const double istd = 1.0 / std::sqrt(var);
        for (float& v : vol.data) {
            if (v != 0.0f) v = static_cast<float>((v - mean) * istd);
        }
    }
}

namespace {

Patch cut_patch(const Case& c, std::int64_t p, const std::array<std::int64_t, 3>& corner) {
    if (!c.label) throw ContractError("patch extraction requires a labeled case");
    const auto& shape = c.modalities[0].shape;
    Patch out;
    out.size = p;
    const std::int64_t pv = p * p * p;
    out.image.assign(static_cast<std::size_t>(kNumModalities * pv), 0.0f);
    out.labels.assign(static_cast<std::size_t>(pv), 0);

    // Overlap of the patch with the volume, in patch coordinates.
    std::array<std::int64_t, 3> lo{}, hi{};
    for (int d = 0; d < 3; ++d) {
        lo[d] = std::max<std::int64_t>(0, -corner[d]);
        hi[d] = std::min(p, shape[d] - corner[d]);
        if (hi[d] <= lo[d]) return out; // no overlap: all padding
    }
    const std::int64_t H = shape[1], W = shape[2];
    for (std::int64_t z = lo[0]; z < hi[0]; ++z) {
        for (std::int64_t y = lo[1]; y < hi[1]; ++y) {
            const std::int64_t src_row = ((corner[0] + z) * H + (corner[1] + y)) * W + corner[2] + lo[2];
            const std::int64_t dst_row = (z * p + y) * p + lo[2];
            const std::int64_t run = hi[2] - lo[2];
            for (int m = 0; m < kNumModalities; ++m)
                std::copy_n(c.modalities[m].data.begin() + src_row, run,
                            out.image.begin() + m * pv + dst_row);
            std::copy_n(c.label->data.begin() + src_row, run, out.labels.begin() + dst_row);
        }
    }
    return out;
}

} // namespace

Patch sample_patch(const Case& c, std::int64_t patch_size, Rng& rng) {
    if (patch_size < 1) throw ValueError("sample_patch: patch_size must be positive");
    const auto& shape = c.modalities[0].shape;
    std::array<std::int64_t, 3> corner{};
    for (int d = 0; d < 3; ++d) {
        // When the volume exceeds the patch the corner ranges over every
        // fully-contained position; otherwise the single feasible placement
        // is the low edge (corner 0), with padding making up the rest.
        const std::int64_t span = shape[d] - patch_size;
        corner[d] = rng.uniform_int(std::min<std::int64_t>(0, span), std::max<std::int64_t>(0, span));
    }
    return cut_patch(c, patch_size, corner);
}

Patch center_patch(const Case& c, std::int64_t patch_size) {
    if (patch_size < 1) throw ValueError("center_patch: patch_size must be positive");
    const auto& shape = c.modalities[0].shape;
    std::array<std::int64_t, 3> corner{};
    for (int d = 0; d < 3; ++d) {
        const std::int64_t span = shape[d] - patch_size;
        // floor division so an undersized volume sits centered in the padding
        corner[d] = (span >= 0 || span % 2 == 0) ? span / 2 : span / 2 - 1;
    }
    return cut_patch(c, patch_size, corner);
}

} // namespace vseg
