#pragma once

#include "vseg/tensor.hpp"

namespace vseg {

// Volumetric ops over NCDHW tensors. Kernels may parallelize internally, but
// every output element is written by exactly one thread with a fixed inner
// summation order, so results are bit-identical across thread counts.

enum class Padding { Same, Valid };

// Cross-correlation (no kernel flip). x:[N,Cin,D,H,W], w:[Cout,Cin,kd,kh,kw],
// bias:[Cout] or undefined for none. Same padding requires odd kernel dims
// and preserves spatial size at stride 1.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, Padding padding = Padding::Same);

// Per-window max over non-overlapping (window == stride) or strided windows;
// backward routes the gradient to the first (lowest flat index) maximum.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, int window = 2, int stride = 2);

// Integer-factor trilinear upsampling, align-corners=false convention
// (source coordinate (o + 0.5)/factor - 0.5, clamped at the low edge).
template <typename T>
Tensor<T> upsample_trilinear(const Tensor<T>& x, int factor = 2);

// Per-sample, per-channel standardization over the spatial dims (population
// variance), then affine scale/shift. gamma/beta: [C].
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps = 1e-5);

#define VSEG_OPS3D_EXTERN(T)                                                                   \
    extern template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        int, Padding);                                         \
    extern template Tensor<T> maxpool3d<T>(const Tensor<T>&, int, int);                        \
    extern template Tensor<T> upsample_trilinear<T>(const Tensor<T>&, int);                    \
    extern template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&,             \
                                               const Tensor<T>&, double);
VSEG_OPS3D_EXTERN(float)
VSEG_OPS3D_EXTERN(double)
#undef VSEG_OPS3D_EXTERN

} // namespace vseg
