#include "vseg/loss.hpp"

#include <cmath>

namespace vseg {

void LossConfig::validate() const {
    if (smooth_eps < 0.0) throw ConfigError("loss: smooth_eps must be >= 0");
}

namespace {

template <typename T>
Tensor<T> dice_quotient(const Tensor<T>& u, const Tensor<T>& v, double smooth_eps, int first_class,
                        const char* opname) {
    if (!u.defined() || !v.defined() || u.ndim() != 5)
        throw ShapeError(std::string(opname) + ": expected [N,K,D,H,W] tensors");
    if (u.shape() != v.shape())
        throw ShapeError(std::string(opname) + ": shape mismatch " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
    const std::int64_t K = u.dim(1);
    if (K - first_class < 1)
        throw ConfigError(std::string(opname) + ": class set is empty (K=" + std::to_string(K) + ")");

    Tensor<T> uu = u, vv = v;
    if (first_class > 0) {
        uu = slice(u, 1, first_class, K - first_class);
        vv = slice(v, 1, first_class, K - first_class);
    }
    const std::vector<int> pooled_axes{0, 2, 3, 4}; // batch items pool into the voxel sum
    auto inter = sum(mul(uu, vv), pooled_axes);
    auto denom = add(add(sum(uu, pooled_axes), sum(vv, pooled_axes)), smooth_eps);
    return mul(mean_all(safe_div(inter, denom)), -2.0);
}

} // namespace

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& u, const Tensor<T>& v, const LossConfig& cfg) {
    cfg.validate();
    return dice_quotient(u, v, cfg.smooth_eps, cfg.class_set == ClassSet::ForegroundOnly ? 1 : 0,
                         "dice_loss");
}

template <typename T>
Tensor<T> region_dice_loss(const Tensor<T>& p, const Tensor<T>& m, const LossConfig& cfg) {
    cfg.validate();
    for (T x : m.data())
        if (x != T(0) && x != T(1)) throw ValueError("region_dice_loss: masks must be binary");
    return dice_quotient(p, m, cfg.smooth_eps, 0, "region_dice_loss");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels) {
    if (!logits.defined() || logits.ndim() != 5) throw ShapeError("cross_entropy: expected [N,K,D,H,W] logits");
    const std::int64_t N = logits.dim(0), K = logits.dim(1);
    const std::int64_t S = logits.dim(2) * logits.dim(3) * logits.dim(4);
    const std::int64_t M = N * S;
    if (static_cast<std::int64_t>(labels.size()) != M)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(M) +
                         " voxels");
    for (auto l : labels)
        if (l >= K) throw ValueError("cross_entropy: label " + std::to_string(int(l)) + " out of range [0," +
                                     std::to_string(K) + ")");

    // softmax probabilities are kept for the backward pass; per-sample
    // partial sums keep the reduction order independent of thread count
    auto probs = std::make_shared<std::vector<T>>(logits.data().size());
    const T* px = logits.data().data();
    std::vector<double> partial(static_cast<std::size_t>(N), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < S; ++i) {
            const std::int64_t base = n * K * S + i;
            T m = px[base];
            for (std::int64_t k = 1; k < K; ++k) m = std::max(m, px[base + k * S]);
            double z = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                const T e = std::exp(px[base + k * S] - m);
                (*probs)[base + k * S] = e;
                z += static_cast<double>(e);
            }
            const T invz = static_cast<T>(1.0 / z);
            for (std::int64_t k = 0; k < K; ++k) (*probs)[base + k * S] *= invz;
            const std::int64_t lbl = labels[n * S + i];
            // -log p = log z + m - logit[label]
            acc += std::log(z) + static_cast<double>(m) - static_cast<double>(px[base + lbl * S]);
        }
        partial[n] = acc;
    }
    double total = 0.0;
    for (std::int64_t n = 0; n < N; ++n) total += partial[n];

    auto ix = logits.impl();
    auto lbls = std::make_shared<std::vector<std::uint8_t>>(labels);
    auto bwd = [ix, probs, lbls, N, K, S, M](TensorImpl<T>& o) {
        if (!ix->requires_grad) return;
        ix->ensure_grad();
        const T g = o.grad[0] / static_cast<T>(M);
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t i = 0; i < S; ++i) {
                const std::int64_t base = n * K * S + i;
                const std::int64_t lbl = (*lbls)[n * S + i];
                for (std::int64_t k = 0; k < K; ++k) {
                    T p = (*probs)[base + k * S];
                    if (k == lbl) p -= T(1);
                    ix->grad[base + k * S] += g * p;
                }
            }
        }
    };
    return detail::make_node<T>({}, {static_cast<T>(total / static_cast<double>(M))}, {ix}, std::move(bwd));
}

template <typename T>
Tensor<T> onehot(const std::vector<std::uint8_t>& labels, const Shape& like) {
    if (like.size() != 5) throw ShapeError("onehot: target shape must be [N,K,D,H,W]");
    const std::int64_t N = like[0], K = like[1], S = like[2] * like[3] * like[4];
    if (static_cast<std::int64_t>(labels.size()) != N * S)
        throw ShapeError("onehot: " + std::to_string(labels.size()) + " labels for " + std::to_string(N * S) +
                         " voxels");
    std::vector<T> v(static_cast<std::size_t>(N * K * S), T(0));
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < S; ++i) {
            const std::int64_t lbl = labels[n * S + i];
            if (lbl >= K) throw ValueError("onehot: label " + std::to_string(int(lbl)) + " out of range");
            v[(n * K + lbl) * S + i] = T(1);
        }
    return Tensor<T>::from_data(like, std::move(v));
}

template <typename T>
Tensor<T> combined_loss(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels, const LossConfig& cfg) {
    auto d = dice_loss(softmax(logits, 1), onehot<T>(labels, logits.shape()), cfg);
    auto c = cross_entropy(logits, labels);
    return add(d, c);
}

template <typename T>
Tensor<T> training_loss(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels, const LossConfig& cfg) {
    switch (cfg.kind) {
    case LossKind::Dice:
        return dice_loss(softmax(logits, 1), onehot<T>(labels, logits.shape()), cfg);
    case LossKind::CrossEntropy:
        return cross_entropy(logits, labels);
    case LossKind::DicePlusCe:
        return combined_loss(logits, labels, cfg);
    }
    throw ConfigError("training_loss: unknown loss kind");
}

#define VSEG_LOSS_INSTANTIATE(T)                                                                       \
    template Tensor<T> dice_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);            \
    template Tensor<T> region_dice_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);     \
    template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::uint8_t>&);           \
    template Tensor<T> combined_loss<T>(const Tensor<T>&, const std::vector<std::uint8_t>&,            \
                                        const LossConfig&);                                            \
    template Tensor<T> onehot<T>(const std::vector<std::uint8_t>&, const Shape&);                      \
    template Tensor<T> training_loss<T>(const Tensor<T>&, const std::vector<std::uint8_t>&,            \
                                        const LossConfig&);

VSEG_LOSS_INSTANTIATE(float)
VSEG_LOSS_INSTANTIATE(double)

} // namespace vseg
