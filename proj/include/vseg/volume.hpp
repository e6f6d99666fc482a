#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vseg/errors.hpp"

namespace vseg {

// Scalar 3D grid with physical voxel spacing in mm. Data is x-fastest: index
// (z*H + y)*W + x for shape {D,H,W}.
struct Volume {
    std::array<std::int64_t, 3> shape{0, 0, 0}; // D, H, W
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<float> data;

    std::int64_t voxels() const { return shape[0] * shape[1] * shape[2]; }
    void validate(const std::string& what) const;
};

// Same grid carrying the raw challenge labels:
//   0 background, 1 necrosis/non-enhancing, 2 edema, 4 enhancing
struct LabelVolume {
    std::array<std::int64_t, 3> shape{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> data;

    std::int64_t voxels() const { return shape[0] * shape[1] * shape[2]; }
    void validate(const std::string& what) const; // also checks the label set
};

constexpr int kNumModalities = 4;
const char* modality_name(int i); // "t1", "t1ce", "t2", "flair"

// One patient: four co-registered modalities, optional reference labels, and
// the dataset index used for cotraining head routing.
struct Case {
    std::string id;
    int dataset_tag = 0;
    std::array<Volume, kNumModalities> modalities;
    std::optional<LabelVolume> label;

    void validate() const; // shape/spacing agreement across members
};

// ---- container format ----
// One text header line: VSEG1 <f32|u8> D H W sx sy sz
// followed by the little-endian raw payload in x-fastest order.

void write_volume(const Volume& v, const std::string& path);
Volume read_volume(const std::string& path);
void write_labels(const LabelVolume& v, const std::string& path);
LabelVolume read_labels(const std::string& path);

// ---- manifest ----
// One case per line, tab-separated: id, dataset_tag, 4 modality paths,
// optional label path. '#' starts a comment. Relative paths resolve against
// the manifest's directory.

struct CaseDescriptor {
    std::string id;
    int dataset_tag = 0;
    std::array<std::string, kNumModalities> modality_paths;
    std::string label_path; // empty when absent
};

std::vector<CaseDescriptor> read_manifest(const std::string& path);
void write_manifest(const std::vector<CaseDescriptor>& cases, const std::string& path);

// Reads all volumes of one descriptor and cross-checks co-registration.
Case load_case(const CaseDescriptor& d);

// Serializes a case's volumes into dir/<id>_<modality>.vseg (+ _seg for the
// label) and returns the matching descriptor.
CaseDescriptor store_case(const Case& c, const std::string& dir);

} // namespace vseg
