#include "vseg/ops3d.hpp"

#include <algorithm>
#include <cmath>

namespace vseg {

namespace {

template <typename T>
void check_5d(const Tensor<T>& x, const char* op) {
    if (!x.defined() || x.ndim() != 5)
        throw ShapeError(std::string(op) + ": expected a 5-D NCDHW tensor");
}

} // namespace

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride, Padding padding) {
    check_5d(x, "conv3d");
    if (!w.defined() || w.ndim() != 5) throw ShapeError("conv3d: weight must be [Cout,Cin,kd,kh,kw]");
    if (stride < 1) throw ValueError("conv3d: stride must be >= 1");
    const std::int64_t N = x.dim(0), Cin = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const std::int64_t Cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    if (w.dim(1) != Cin)
        throw ShapeError("conv3d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " + std::to_string(Cin));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Cout))
        throw ShapeError("conv3d: bias must be [Cout]");
    if (padding == Padding::Same && (kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0))
        throw ShapeError("conv3d: same padding requires odd kernel dims");

    const std::int64_t pd = padding == Padding::Same ? (kd - 1) / 2 : 0;
    const std::int64_t ph = padding == Padding::Same ? (kh - 1) / 2 : 0;
    const std::int64_t pw_ = padding == Padding::Same ? (kw - 1) / 2 : 0;
    const std::int64_t s = stride;
    const std::int64_t OD = (D + 2 * pd - kd) / s + 1;
    const std::int64_t OH = (H + 2 * ph - kh) / s + 1;
    const std::int64_t OW = (W + 2 * pw_ - kw) / s + 1;
    if (OD < 1 || OH < 1 || OW < 1)
        throw ShapeError("conv3d: kernel larger than padded input");

    std::vector<T> out(static_cast<std::size_t>(N * Cout * OD * OH * OW));
    const T* px = x.data().data();
    const T* pwt = w.data().data();
    const T* pb = bias.defined() ? bias.data().data() : nullptr;

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Cout; ++co) {
            const T* wo = pwt + co * Cin * kd * kh * kw;
            T* po = out.data() + ((n * Cout + co) * OD) * OH * OW;
            const T b = pb ? pb[co] : T(0);
            for (std::int64_t oz = 0; oz < OD; ++oz) {
                const std::int64_t iz0 = oz * s - pd;
                const std::int64_t dz_lo = std::max<std::int64_t>(0, -iz0);
                const std::int64_t dz_hi = std::min<std::int64_t>(kd, D - iz0);
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    const std::int64_t iy0 = oy * s - ph;
                    const std::int64_t dy_lo = std::max<std::int64_t>(0, -iy0);
                    const std::int64_t dy_hi = std::min<std::int64_t>(kh, H - iy0);
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        const std::int64_t ix0 = ox * s - pw_;
                        const std::int64_t dx_lo = std::max<std::int64_t>(0, -ix0);
                        const std::int64_t dx_hi = std::min<std::int64_t>(kw, W - ix0);
                        T acc = b;
                        for (std::int64_t ci = 0; ci < Cin; ++ci) {
                            const T* xc = px + ((n * Cin + ci) * D) * H * W;
                            const T* wc = wo + ci * kd * kh * kw;
                            for (std::int64_t dz = dz_lo; dz < dz_hi; ++dz) {
                                for (std::int64_t dy = dy_lo; dy < dy_hi; ++dy) {
                                    const T* xrow = xc + ((iz0 + dz) * H + (iy0 + dy)) * W + ix0;
                                    const T* wrow = wc + (dz * kh + dy) * kw;
                                    for (std::int64_t dx = dx_lo; dx < dx_hi; ++dx)
                                        acc += wrow[dx] * xrow[dx];
                                }
                            }
                        }
                        po[(oz * OH + oy) * OW + ox] = acc;
                    }
                }
            }
        }
    }

    auto ix = x.impl();
    auto iw = w.impl();
    auto ib = bias.defined() ? bias.impl() : nullptr;
    auto bwd = [ix, iw, ib, N, Cin, D, H, W, Cout, kd, kh, kw, pd, ph, pw_, s, OD, OH, OW](TensorImpl<T>& o) {
        const T* gy = o.grad.data();

        if (ix->requires_grad) {
            ix->ensure_grad();
            const T* wt = iw->data.data();
            // gather per input voxel: every (co, kernel offset) pair that maps onto it
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t n = 0; n < N; ++n) {
                for (std::int64_t ci = 0; ci < Cin; ++ci) {
                    T* gx = ix->grad.data() + ((n * Cin + ci) * D) * H * W;
                    for (std::int64_t z = 0; z < D; ++z) {
                        for (std::int64_t y = 0; y < H; ++y) {
                            for (std::int64_t xv = 0; xv < W; ++xv) {
                                T acc = T(0);
                                for (std::int64_t co = 0; co < Cout; ++co) {
                                    const T* wc = wt + (co * Cin + ci) * kd * kh * kw;
                                    const T* gc = gy + ((n * Cout + co) * OD) * OH * OW;
                                    for (std::int64_t dz = 0; dz < kd; ++dz) {
                                        const std::int64_t tz = z + pd - dz;
                                        if (tz < 0 || tz % s || tz / s >= OD) continue;
                                        for (std::int64_t dy = 0; dy < kh; ++dy) {
                                            const std::int64_t ty = y + ph - dy;
                                            if (ty < 0 || ty % s || ty / s >= OH) continue;
                                            for (std::int64_t dx = 0; dx < kw; ++dx) {
                                                const std::int64_t tx = xv + pw_ - dx;
                                                if (tx < 0 || tx % s || tx / s >= OW) continue;
                                                acc += wc[(dz * kh + dy) * kw + dx] *
                                                       gc[((tz / s) * OH + ty / s) * OW + tx / s];
                                            }
                                        }
                                    }
                                }
                                gx[(z * H + y) * W + xv] += acc;
                            }
                        }
                    }
                }
            }
        }

        if (iw->requires_grad) {
            iw->ensure_grad();
            const T* px2 = ix->data.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t co = 0; co < Cout; ++co) {
                for (std::int64_t ci = 0; ci < Cin; ++ci) {
                    T* gw = iw->grad.data() + (co * Cin + ci) * kd * kh * kw;
                    for (std::int64_t dz = 0; dz < kd; ++dz) {
                        for (std::int64_t dy = 0; dy < kh; ++dy) {
                            for (std::int64_t dx = 0; dx < kw; ++dx) {
                                double acc = 0.0;
                                for (std::int64_t n = 0; n < N; ++n) {
                                    const T* xc = px2 + ((n * Cin + ci) * D) * H * W;
                                    const T* gc = gy + ((n * Cout + co) * OD) * OH * OW;
                                    for (std::int64_t oz = 0; oz < OD; ++oz) {
                                        const std::int64_t iz = oz * s - pd + dz;
                                        if (iz < 0 || iz >= D) continue;
                                        for (std::int64_t oy = 0; oy < OH; ++oy) {
                                            const std::int64_t iy = oy * s - ph + dy;
                                            if (iy < 0 || iy >= H) continue;
                                            const std::int64_t ix_base = 0 * s - pw_ + dx;
                                            const T* xrow = xc + (iz * H + iy) * W;
                                            const T* grow = gc + (oz * OH + oy) * OW;
                                            for (std::int64_t ox = 0; ox < OW; ++ox) {
                                                const std::int64_t ixv = ix_base + ox * s;
                                                if (ixv < 0 || ixv >= W) continue;
                                                acc += static_cast<double>(xrow[ixv]) * static_cast<double>(grow[ox]);
                                            }
                                        }
                                    }
                                }
                                gw[(dz * kh + dy) * kw + dx] += static_cast<T>(acc);
                            }
                        }
                    }
                }
            }
        }

        if (ib && ib->requires_grad) {
            ib->ensure_grad();
#pragma omp parallel for schedule(static)
            for (std::int64_t co = 0; co < Cout; ++co) {
                double acc = 0.0;
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* gc = gy + ((n * Cout + co) * OD) * OH * OW;
                    for (std::int64_t i = 0; i < OD * OH * OW; ++i) acc += static_cast<double>(gc[i]);
                }
                ib->grad[co] += static_cast<T>(acc);
            }
        }
    };

    return detail::make_node<T>({N, Cout, OD, OH, OW}, std::move(out), {ix, iw, ib}, std::move(bwd));
}

// ---------------------------------------------------------------------------
// maxpool3d
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, int window, int stride) {
    check_5d(x, "maxpool3d");
    if (window < 1 || stride < 1) throw ValueError("maxpool3d: window and stride must be >= 1");
    const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    if (D % stride || H % stride || W % stride)
        throw ShapeError("maxpool3d: spatial dims " + shape_str({D, H, W}) + " not divisible by stride " + std::to_string(stride));
    if (window > D || window > H || window > W)
        throw ShapeError("maxpool3d: window exceeds spatial extent");
    const std::int64_t k = window, s = stride;
    const std::int64_t OD = (D - k) / s + 1, OH = (H - k) / s + 1, OW = (W - k) / s + 1;

    const std::int64_t out_n = N * C * OD * OH * OW;
    std::vector<T> out(static_cast<std::size_t>(out_n));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out_n));
    const T* px = x.data().data();

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const std::int64_t in_base = ((n * C + c) * D) * H * W;
            T* po = out.data() + ((n * C + c) * OD) * OH * OW;
            std::int64_t* pa = argmax->data() + ((n * C + c) * OD) * OH * OW;
            for (std::int64_t oz = 0; oz < OD; ++oz) {
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        T best{};
                        std::int64_t best_i = -1;
                        for (std::int64_t dz = 0; dz < k; ++dz) {
                            for (std::int64_t dy = 0; dy < k; ++dy) {
                                for (std::int64_t dx = 0; dx < k; ++dx) {
                                    const std::int64_t i =
                                        in_base + ((oz * s + dz) * H + (oy * s + dy)) * W + (ox * s + dx);
                                    if (best_i < 0 || px[i] > best) { best = px[i]; best_i = i; }
                                }
                            }
                        }
                        po[(oz * OH + oy) * OW + ox] = best;
                        pa[(oz * OH + oy) * OW + ox] = best_i;
                    }
                }
            }
        }
    }

    auto ix = x.impl();
    return detail::make_node<T>({N, C, OD, OH, OW}, std::move(out), {ix}, [ix, argmax, out_n](TensorImpl<T>& o) {
        if (!ix->requires_grad) return;
        ix->ensure_grad();
        const auto& arg = *argmax;
        for (std::int64_t i = 0; i < out_n; ++i) ix->grad[arg[i]] += o.grad[i];
    });
}

// ---------------------------------------------------------------------------
// upsample_trilinear
// ---------------------------------------------------------------------------

namespace {

// align-corners=false source sampling for one axis: per output coordinate the
// two source indices and their weights
struct AxisTap {
    std::vector<std::int64_t> i0, i1;
    std::vector<double> w0, w1;
};

AxisTap make_taps(std::int64_t in, int factor) {
    AxisTap t;
    const std::int64_t out = in * factor;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w0.resize(out);
    t.w1.resize(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
        if (src < 0.0) src = 0.0;
        const std::int64_t lo = static_cast<std::int64_t>(src);
        const double frac = src - static_cast<double>(lo);
        t.i0[o] = lo;
        t.i1[o] = std::min(lo + 1, in - 1);
        t.w0[o] = 1.0 - frac;
        t.w1[o] = frac;
    }
    return t;
}

} // namespace

template <typename T>
Tensor<T> upsample_trilinear(const Tensor<T>& x, int factor) {
    check_5d(x, "upsample_trilinear");
    if (factor < 1) throw ValueError("upsample_trilinear: factor must be a positive integer");
    const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const std::int64_t OD = D * factor, OH = H * factor, OW = W * factor;

    auto tz = std::make_shared<AxisTap>(make_taps(D, factor));
    auto ty = std::make_shared<AxisTap>(make_taps(H, factor));
    auto tx = std::make_shared<AxisTap>(make_taps(W, factor));

    std::vector<T> out(static_cast<std::size_t>(N * C * OD * OH * OW));
    const T* px = x.data().data();

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const T* xc = px + ((n * C + c) * D) * H * W;
            T* po = out.data() + ((n * C + c) * OD) * OH * OW;
            for (std::int64_t oz = 0; oz < OD; ++oz) {
                const std::int64_t z0 = tz->i0[oz], z1 = tz->i1[oz];
                const double wz0 = tz->w0[oz], wz1 = tz->w1[oz];
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    const std::int64_t y0 = ty->i0[oy], y1 = ty->i1[oy];
                    const double wy0 = ty->w0[oy], wy1 = ty->w1[oy];
                    const T* r00 = xc + (z0 * H + y0) * W;
                    const T* r01 = xc + (z0 * H + y1) * W;
                    const T* r10 = xc + (z1 * H + y0) * W;
                    const T* r11 = xc + (z1 * H + y1) * W;
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        const std::int64_t x0 = tx->i0[ox], x1 = tx->i1[ox];
                        const double wx0 = tx->w0[ox], wx1 = tx->w1[ox];
                        const double v =
                            wz0 * (wy0 * (wx0 * r00[x0] + wx1 * r00[x1]) + wy1 * (wx0 * r01[x0] + wx1 * r01[x1])) +
                            wz1 * (wy0 * (wx0 * r10[x0] + wx1 * r10[x1]) + wy1 * (wx0 * r11[x0] + wx1 * r11[x1]));
                        po[(oz * OH + oy) * OW + ox] = static_cast<T>(v);
                    }
                }
            }
        }
    }

    auto ix = x.impl();
    auto bwd = [ix, tz, ty, tx, N, C, D, H, W, OD, OH, OW](TensorImpl<T>& o) {
        if (!ix->requires_grad) return;
        ix->ensure_grad();
        // scatter the adjoint; (n,c) channels are disjoint so the outer loop parallelizes safely
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                T* gx = ix->grad.data() + ((n * C + c) * D) * H * W;
                const T* go = o.grad.data() + ((n * C + c) * OD) * OH * OW;
                for (std::int64_t oz = 0; oz < OD; ++oz) {
                    const std::int64_t z0 = tz->i0[oz], z1 = tz->i1[oz];
                    const double wz0 = tz->w0[oz], wz1 = tz->w1[oz];
                    for (std::int64_t oy = 0; oy < OH; ++oy) {
                        const std::int64_t y0 = ty->i0[oy], y1 = ty->i1[oy];
                        const double wy0 = ty->w0[oy], wy1 = ty->w1[oy];
                        for (std::int64_t ox = 0; ox < OW; ++ox) {
                            const double g = static_cast<double>(go[(oz * OH + oy) * OW + ox]);
                            const std::int64_t x0 = tx->i0[ox], x1 = tx->i1[ox];
                            const double wx0 = tx->w0[ox], wx1 = tx->w1[ox];
                            gx[(z0 * H + y0) * W + x0] += static_cast<T>(g * wz0 * wy0 * wx0);
                            gx[(z0 * H + y0) * W + x1] += static_cast<T>(g * wz0 * wy0 * wx1);
                            gx[(z0 * H + y1) * W + x0] += static_cast<T>(g * wz0 * wy1 * wx0);
                            gx[(z0 * H + y1) * W + x1] += static_cast<T>(g * wz0 * wy1 * wx1);
                            gx[(z1 * H + y0) * W + x0] += static_cast<T>(g * wz1 * wy0 * wx0);
                            gx[(z1 * H + y0) * W + x1] += static_cast<T>(g * wz1 * wy0 * wx1);
                            gx[(z1 * H + y1) * W + x0] += static_cast<T>(g * wz1 * wy1 * wx0);
                            gx[(z1 * H + y1) * W + x1] += static_cast<T>(g * wz1 * wy1 * wx1);
                        }
                    }
                }
            }
        }
    };
    return detail::make_node<T>({N, C, OD, OH, OW}, std::move(out), {ix}, std::move(bwd));
}

// ---------------------------------------------------------------------------
// instance_norm
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    check_5d(x, "instance_norm");
    const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const std::int64_t S = D * H * W;
    if (S < 2) throw ShapeError("instance_norm: needs more than one spatial voxel per channel");
    if (!gamma.defined() || gamma.ndim() != 1 || gamma.dim(0) != C) throw ShapeError("instance_norm: gamma must be [C]");
    if (!beta.defined() || beta.ndim() != 1 || beta.dim(0) != C) throw ShapeError("instance_norm: beta must be [C]");

    std::vector<T> out(static_cast<std::size_t>(N * C * S));
    auto mu = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N * C));
    auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N * C));
    const T* px = x.data().data();
    const T* pg = gamma.data().data();
    const T* pb = beta.data().data();

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const T* xc = px + (n * C + c) * S;
            double s1 = 0.0, s2 = 0.0;
            for (std::int64_t i = 0; i < S; ++i) {
                const double v = static_cast<double>(xc[i]);
                s1 += v;
                s2 += v * v;
            }
            const double m = s1 / static_cast<double>(S);
            const double var = s2 / static_cast<double>(S) - m * m;
            const double is = 1.0 / std::sqrt(std::max(var, 0.0) + eps);
            (*mu)[n * C + c] = m;
            (*istd)[n * C + c] = is;
            const double g = static_cast<double>(pg[c]);
            const double b = static_cast<double>(pb[c]);
            T* oc = out.data() + (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i)
                oc[i] = static_cast<T>(g * ((static_cast<double>(xc[i]) - m) * is) + b);
        }
    }

    auto ix = x.impl();
    auto ig = gamma.impl();
    auto ib = beta.impl();
    auto bwd = [ix, ig, ib, mu, istd, N, C, S](TensorImpl<T>& o) {
        const T* gy = o.grad.data();
        const T* px2 = ix->data.data();
        const T* pg2 = ig->data.data();
        // channel sums: sums1 = Σ gy, sums2 = Σ gy·xhat per (n,c)
        std::vector<double> sums1(static_cast<std::size_t>(N * C)), sums2(static_cast<std::size_t>(N * C));
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const T* gc = gy + (n * C + c) * S;
                const T* xc = px2 + (n * C + c) * S;
                const double m = (*mu)[n * C + c], is = (*istd)[n * C + c];
                double a1 = 0.0, a2 = 0.0;
                for (std::int64_t i = 0; i < S; ++i) {
                    const double g = static_cast<double>(gc[i]);
                    a1 += g;
                    a2 += g * (static_cast<double>(xc[i]) - m) * is;
                }
                sums1[n * C + c] = a1;
                sums2[n * C + c] = a2;
            }
        }

        if (ix->requires_grad) {
            ix->ensure_grad();
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t n = 0; n < N; ++n) {
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* gc = gy + (n * C + c) * S;
                    const T* xc = px2 + (n * C + c) * S;
                    T* gx = ix->grad.data() + (n * C + c) * S;
                    const double m = (*mu)[n * C + c], is = (*istd)[n * C + c];
                    const double g = static_cast<double>(pg2[c]);
                    const double m1 = sums1[n * C + c] / static_cast<double>(S);
                    const double m2 = sums2[n * C + c] / static_cast<double>(S);
                    for (std::int64_t i = 0; i < S; ++i) {
                        const double xhat = (static_cast<double>(xc[i]) - m) * is;
                        gx[i] += static_cast<T>(g * is * (static_cast<double>(gc[i]) - m1 - xhat * m2));
                    }
                }
            }
        }

        if (ig->requires_grad || ib->requires_grad) {
            if (ig->requires_grad) ig->ensure_grad();
            if (ib->requires_grad) ib->ensure_grad();
#pragma omp parallel for schedule(static)
            for (std::int64_t c = 0; c < C; ++c) {
                double dg = 0.0, db = 0.0;
                for (std::int64_t n = 0; n < N; ++n) {
                    dg += sums2[n * C + c];
                    db += sums1[n * C + c];
                }
                if (ig->requires_grad) ig->grad[c] += static_cast<T>(dg);
                if (ib->requires_grad) ib->grad[c] += static_cast<T>(db);
            }
        }
    };
    return detail::make_node<T>({N, C, D, H, W}, std::move(out), {ix, ig, ib}, std::move(bwd));
}

// ---------------------------------------------------------------------------
// instantiations
// ---------------------------------------------------------------------------

#define VSEG_OPS3D_INSTANTIATE(T)                                                                       \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, Padding);   \
    template Tensor<T> maxpool3d<T>(const Tensor<T>&, int, int);                                        \
    template Tensor<T> upsample_trilinear<T>(const Tensor<T>&, int);                                    \
    template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

VSEG_OPS3D_INSTANTIATE(float)
VSEG_OPS3D_INSTANTIATE(double)

} // namespace vseg
