#pragma once

#include <cstdint>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

enum class LossKind { Dice, CrossEntropy, DicePlusCe };
enum class ClassSet { ForegroundOnly, AllClasses };

struct LossConfig {
    LossKind kind = LossKind::Dice;
    // Which classes enter the Dice class average; the softmax model defaults
    // to foreground-only so the -1 optimum reflects tumor overlap, not the
    // dominant background.
    ClassSet class_set = ClassSet::ForegroundOnly;
    // Added to the Dice denominator only; the exact 0 for disjoint supports
    // survives, while near-empty classes cannot blow up the quotient.
    double smooth_eps = 1e-5;

    void validate() const;
};

// Multiclass soft Dice over probabilities u and one-hot targets v, both
// [N,K,D,H,W]. Batch items pool into the voxel sum (one global Dice per
// class per minibatch):
//   L = -(2/|K|) sum_k  (sum_i u_ik v_ik) / (sum_i u_ik + sum_i v_ik + eps)
// Perfect agreement gives -1, disjoint supports give 0.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& u, const Tensor<T>& v, const LossConfig& cfg);

// Same quotient with K = the overlapping region channels (whole tumor /
// tumor core / enhancing tumor) and sigmoid activations p. The masks m must
// be strictly binary.
template <typename T>
Tensor<T> region_dice_loss(const Tensor<T>& p, const Tensor<T>& m, const LossConfig& cfg);

// Mean over all voxels of -log softmax(logits)[label]; log-sum-exp
// stabilized, fused forward/backward. labels are class indices in NDHW
// order, length N*D*H*W.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels);

// Unweighted sum: dice_loss(softmax(logits), onehot(labels)) + cross_entropy.
template <typename T>
Tensor<T> combined_loss(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels, const LossConfig& cfg);

// One-hot expansion of class indices to [N,K,D,H,W] (no gradient).
template <typename T>
Tensor<T> onehot(const std::vector<std::uint8_t>& labels, const Shape& like);

// Dispatch on cfg.kind for softmax-head training.
template <typename T>
Tensor<T> training_loss(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels, const LossConfig& cfg);

#define VSEG_LOSS_EXTERN(T)                                                                            \
    extern template Tensor<T> dice_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);    \
    extern template Tensor<T> region_dice_loss<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                                  const LossConfig&);                                  \
    extern template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::uint8_t>&);   \
    extern template Tensor<T> combined_loss<T>(const Tensor<T>&, const std::vector<std::uint8_t>&,    \
                                               const LossConfig&);                                     \
    extern template Tensor<T> onehot<T>(const std::vector<std::uint8_t>&, const Shape&);              \
    extern template Tensor<T> training_loss<T>(const Tensor<T>&, const std::vector<std::uint8_t>&,    \
                                               const LossConfig&);
VSEG_LOSS_EXTERN(float)
VSEG_LOSS_EXTERN(double)
#undef VSEG_LOSS_EXTERN

} // namespace vseg
