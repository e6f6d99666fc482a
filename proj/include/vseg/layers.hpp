#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/ops3d.hpp"
#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class HeadMode { Softmax, Sigmoid };

// Everything that fixes the network shape. The full-scale setting is
// base_features=30, depth=5; desk-scale tests run base=4, depth=3 through the
// identical code path.
struct ModelConfig {
    int in_channels = 4;
    int base_features = 30;
    int depth = 5;
    int num_classes = 0; // softmax head: mutually exclusive with num_regions
    int num_regions = 0; // sigmoid head
    HeadMode head_mode = HeadMode::Softmax;
    double leakiness = 1e-2;
    int num_heads = 1;

    void validate() const;       // throws ConfigError on an inconsistent config
    int head_channels() const;   // output channels per head under the active mode
    int features_at(int level) const; // base_features * 2^level
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

// conv3x3x3 -> instance_norm -> leaky_relu unit
template <typename T>
struct ConvBlock {
    Tensor<T> w, b, gamma, beta;
};

// Encoder/decoder U-Net over NCDHW volumes with per-dataset 1x1x1 output
// heads sharing one trunk. Parameters are leaf tensors with requires_grad
// set; copies of a UNet alias the same parameters.
template <typename T>
class UNet {
public:
    UNet() = default;

    // deterministic: two builds from the same seed are bit-identical
    static UNet build(const ModelConfig& cfg, std::uint64_t seed);

    // logits from the selected head; spatial shape preserved
    Tensor<T> forward(const Tensor<T>& x, int head_index = 0) const;

    // softmax/sigmoid of the logits per head_mode
    Tensor<T> predict_probs(const Tensor<T>& x, int head_index = 0) const;

    // stable name -> tensor list in construction order (checkpoint layout)
    std::vector<NamedParam<T>> parameters() const;

    const ModelConfig& config() const { return cfg_; }
    std::int64_t parameter_count() const;

private:
    ModelConfig cfg_;
    std::vector<std::array<ConvBlock<T>, 2>> enc_;  // one pair of blocks per level
    std::vector<Tensor<T>> reduce_w_, reduce_b_;    // channel-halving 1x1x1, per decoder level
    std::vector<std::array<ConvBlock<T>, 2>> dec_;
    std::vector<Tensor<T>> head_w_, head_b_;
};

extern template class UNet<float>;
extern template class UNet<double>;

} // namespace vseg
