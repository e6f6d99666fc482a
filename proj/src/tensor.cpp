#include "vseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vseg {

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Shape strides_of(const Shape& shape) {
    Shape strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        strides[i] = strides[i + 1] * shape[i + 1];
    return strides;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<T>(static_cast<std::size_t>(numel_of(shape)), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    return from_data(shape, std::vector<T>(static_cast<std::size_t>(numel_of(shape)), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> values, bool requires_grad) {
    if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from_data(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
    impl_->ensure_grad();
    return impl_->grad;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
    impl_->ensure_grad();
    return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    return impl_->data[0];
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw ContractError("backward() on undefined tensor");
    if (loss.numel() != 1) throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward() on a tensor that does not require grad");

    // iterative post-order DFS; children appear after all their parents
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> visited;
    struct Frame { TensorImpl<T>* node; std::size_t next; };
    std::vector<Frame> stack;
    stack.push_back({loss.impl().get(), 0});
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorImpl<T>* p = f.node->parents[f.next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // interior grads are per-sweep; leaves accumulate across sweeps
    for (auto* node : order) {
        if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
        else if (node->requires_grad) node->ensure_grad();
    }

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* node = *it;
        if (node->backward_fn && node->requires_grad) node->backward_fn(*node);
    }
}

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> make_node(Shape shape, std::vector<T> data,
                    std::vector<std::shared_ptr<TensorImpl<T>>> parents,
                    std::function<void(TensorImpl<T>&)> backward_fn) {
    auto out = Tensor<T>::from_data(std::move(shape), std::move(data));
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p && p->requires_grad) { needs = true; break; }
    if (needs) {
        out.impl()->requires_grad = true;
        for (auto& p : parents)
            if (p) out.impl()->parents.push_back(std::move(p));
        out.impl()->backward_fn = std::move(backward_fn);
    }
    return out;
}

template Tensor<float> make_node<float>(Shape, std::vector<float>,
                                        std::vector<std::shared_ptr<TensorImpl<float>>>,
                                        std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_node<double>(Shape, std::vector<double>,
                                          std::vector<std::shared_ptr<TensorImpl<double>>>,
                                          std::function<void(TensorImpl<double>&)>);

} // namespace detail

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> data, std::vector<ImplPtr<T>> parents,
                  std::function<void(TensorImpl<T>&)> backward_fn) {
    return detail::make_node<T>(std::move(shape), std::move(data), std::move(parents), std::move(backward_fn));
}

// elementwise tensor-tensor op; d*_fn(upstream, a_val, b_val, out_val).
// Either side may be a one-element tensor broadcast against the other; any
// other shape mismatch is an error (no general broadcasting).
template <typename T, class Fwd, class Da, class Db>
Tensor<T> ew_binary(const Tensor<T>& a, const Tensor<T>& b, const char* opname, Fwd fwd, Da da, Db db) {
    const bool a_scalar = a.numel() == 1 && a.shape() != b.shape();
    const bool b_scalar = b.numel() == 1 && a.shape() != b.shape();
    if (a.shape() != b.shape() && !a_scalar && !b_scalar)
        throw ShapeError(std::string(opname) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const Shape& out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = static_cast<std::size_t>(a_scalar ? b.numel() : a.numel());
    const std::size_t ma = a_scalar ? 0 : 1; // index stride into each operand
    const std::size_t mb = b_scalar ? 0 : 1;

    std::vector<T> out(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i * ma], pb[i * mb]);
    auto ia = a.impl();
    auto ib = b.impl();
    return make_op<T>(out_shape, std::move(out), {ia, ib}, [ia, ib, da, db, ma, mb](TensorImpl<T>& o) {
        const std::size_t n2 = o.data.size();
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (std::size_t i = 0; i < n2; ++i)
                ia->grad[i * ma] += da(o.grad[i], ia->data[i * ma], ib->data[i * mb], o.data[i]);
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (std::size_t i = 0; i < n2; ++i)
                ib->grad[i * mb] += db(o.grad[i], ia->data[i * ma], ib->data[i * mb], o.data[i]);
        }
    });
}

// elementwise unary op; da_fn(upstream, a_val, out_val)
template <typename T, class Fwd, class Da>
Tensor<T> ew_unary(const Tensor<T>& a, Fwd fwd, Da da) {
    const std::size_t n = a.data().size();
    std::vector<T> out(n);
    const T* pa = a.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
    auto ia = a.impl();
    return make_op<T>(a.shape(), std::move(out), {ia}, [ia, da](TensorImpl<T>& o) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const std::size_t n2 = o.data.size();
        for (std::size_t i = 0; i < n2; ++i) ia->grad[i] += da(o.grad[i], ia->data[i], o.data[i]);
    });
}

} // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return ew_binary(
        a, b, "add", [](T x, T y) { return x + y; },
        [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return ew_binary(
        a, b, "sub", [](T x, T y) { return x - y; },
        [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return ew_binary(
        a, b, "mul", [](T x, T y) { return x * y; },
        [](T g, T, T y, T) { return g * y; }, [](T g, T x, T, T) { return g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return ew_binary(
        a, b, "div", [](T x, T y) { return x / y; },
        [](T g, T, T y, T) { return g / y; }, [](T g, T x, T y, T) { return -g * x / (y * y); });
}

template <typename T>
Tensor<T> safe_div(const Tensor<T>& a, const Tensor<T>& b) {
    return ew_binary(
        a, b, "safe_div", [](T x, T y) { return y == T(0) ? T(0) : x / y; },
        [](T g, T, T y, T) { return y == T(0) ? T(0) : g / y; },
        [](T g, T x, T y, T) { return y == T(0) ? T(0) : -g * x / (y * y); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, double s) {
    const T sv = static_cast<T>(s);
    return ew_unary(a, [sv](T x) { return x + sv; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, double s) {
    return add(a, -s);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, double s) {
    const T sv = static_cast<T>(s);
    return ew_unary(a, [sv](T x) { return x * sv; }, [sv](T g, T, T) { return g * sv; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, double s) {
    const T sv = static_cast<T>(s);
    return ew_unary(a, [sv](T x) { return x / sv; }, [sv](T g, T, T) { return g / sv; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return ew_unary(a, [](T x) { return std::exp(x); }, [](T g, T, T y) { return g * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return ew_unary(a, [](T x) { return std::log(x); }, [](T g, T x, T) { return g / x; });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, double lo) {
    const T lv = static_cast<T>(lo);
    return ew_unary(
        a, [lv](T x) { return x < lv ? lv : x; },
        [lv](T g, T x, T) { return x > lv ? g : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double leakiness) {
    const T k = static_cast<T>(leakiness);
    return ew_unary(
        a, [k](T x) { return x >= T(0) ? x : k * x; },
        [k](T g, T x, T) { return x >= T(0) ? g : k * g; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return ew_unary(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T g, T, T y) { return g * y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> reduce_impl(const Tensor<T>& a, const std::vector<int>& axes, bool take_mean) {
    const int nd = a.ndim();
    std::vector<char> reduced(static_cast<std::size_t>(nd), 0);
    for (int ax : axes) {
        if (ax < 0 || ax >= nd) throw IndexError("reduce: axis " + std::to_string(ax) + " invalid for shape " + shape_str(a.shape()));
        if (reduced[ax]) throw IndexError("reduce: duplicate axis " + std::to_string(ax));
        reduced[ax] = 1;
    }
    Shape out_shape;
    std::int64_t reduced_count = 1;
    for (int d = 0; d < nd; ++d) {
        if (reduced[d]) reduced_count *= a.dim(d);
        else out_shape.push_back(a.dim(d));
    }

    // per-input-axis contribution to the flat output index (0 for reduced axes)
    const Shape in_strides = strides_of(a.shape());
    const Shape out_strides = strides_of(out_shape);
    Shape out_contrib(static_cast<std::size_t>(nd), 0);
    {
        std::size_t oi = 0;
        for (int d = 0; d < nd; ++d)
            if (!reduced[d]) out_contrib[d] = out_strides[oi++];
    }
    const std::int64_t in_n = a.numel();
    const std::int64_t out_n = numel_of(out_shape);

    auto map_index = [dims = a.shape(), in_strides, out_contrib, nd](std::int64_t i) {
        std::int64_t o = 0;
        for (int d = 0; d < nd; ++d) o += ((i / in_strides[d]) % dims[d]) * out_contrib[d];
        return o;
    };

    std::vector<double> acc(static_cast<std::size_t>(out_n), 0.0);
    const T* pa = a.data().data();
    for (std::int64_t i = 0; i < in_n; ++i) acc[map_index(i)] += static_cast<double>(pa[i]);

    const double scale = take_mean ? 1.0 / static_cast<double>(reduced_count) : 1.0;
    std::vector<T> out(static_cast<std::size_t>(out_n));
    for (std::int64_t o = 0; o < out_n; ++o) out[o] = static_cast<T>(acc[o] * scale);

    auto ia = a.impl();
    const T bscale = static_cast<T>(scale);
    return make_op<T>(out_shape, std::move(out), {ia},
                      [ia, map_index, bscale, in_n](TensorImpl<T>& o) {
                          if (!ia->requires_grad) return;
                          ia->ensure_grad();
                          for (std::int64_t i = 0; i < in_n; ++i) ia->grad[i] += bscale * o.grad[map_index(i)];
                      });
}

} // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& a, const std::vector<int>& axes) {
    return reduce_impl(a, axes, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, const std::vector<int>& axes) {
    return reduce_impl(a, axes, true);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    std::vector<int> axes(static_cast<std::size_t>(a.ndim()));
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce_impl(a, axes, false);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    std::vector<int> axes(static_cast<std::size_t>(a.ndim()));
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce_impl(a, axes, true);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    const int nd = a.ndim();
    if (axis < 0 || axis >= nd) throw IndexError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(a.shape()));
    const std::int64_t k = a.dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= a.dim(d);

    std::vector<T> out(a.data().size());
    const T* pa = a.data().data();
    for (std::int64_t ou = 0; ou < outer; ++ou) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = ou * k * inner + in;
            T m = pa[base];
            for (std::int64_t c = 1; c < k; ++c) m = std::max(m, pa[base + c * inner]);
            double s = 0.0;
            for (std::int64_t c = 0; c < k; ++c) {
                const T e = std::exp(pa[base + c * inner] - m);
                out[base + c * inner] = e;
                s += static_cast<double>(e);
            }
            const T invs = static_cast<T>(1.0 / s);
            for (std::int64_t c = 0; c < k; ++c) out[base + c * inner] *= invs;
        }
    }

    auto ia = a.impl();
    return make_op<T>(a.shape(), std::move(out), {ia}, [ia, outer, inner, k](TensorImpl<T>& o) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = ou * k * inner + in;
                double dot = 0.0;
                for (std::int64_t c = 0; c < k; ++c)
                    dot += static_cast<double>(o.grad[base + c * inner]) * static_cast<double>(o.data[base + c * inner]);
                for (std::int64_t c = 0; c < k; ++c) {
                    const std::int64_t i = base + c * inner;
                    ia->grad[i] += o.data[i] * (o.grad[i] - static_cast<T>(dot));
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
    const int nd = a.ndim();
    if (b.ndim() != nd) throw ShapeError("concat: rank mismatch");
    if (axis < 0 || axis >= nd) throw IndexError("concat: axis " + std::to_string(axis) + " out of range");
    for (int d = 0; d < nd; ++d)
        if (d != axis && a.dim(d) != b.dim(d))
            throw ShapeError("concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ off-axis");

    Shape out_shape = a.shape();
    out_shape[axis] += b.dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= a.dim(d);
    const std::int64_t ka = a.dim(axis), kb = b.dim(axis);

    std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::int64_t ou = 0; ou < outer; ++ou) {
        std::copy_n(pa + ou * ka * inner, ka * inner, out.data() + ou * (ka + kb) * inner);
        std::copy_n(pb + ou * kb * inner, kb * inner, out.data() + ou * (ka + kb) * inner + ka * inner);
    }

    auto ia = a.impl();
    auto ib = b.impl();
    return make_op<T>(out_shape, std::move(out), {ia, ib}, [ia, ib, outer, inner, ka, kb](TensorImpl<T>& o) {
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            const T* g = o.grad.data() + ou * (ka + kb) * inner;
            if (ia->requires_grad) {
                ia->ensure_grad();
                T* ga = ia->grad.data() + ou * ka * inner;
                for (std::int64_t i = 0; i < ka * inner; ++i) ga[i] += g[i];
            }
            if (ib->requires_grad) {
                ib->ensure_grad();
                T* gb = ib->grad.data() + ou * kb * inner;
                for (std::int64_t i = 0; i < kb * inner; ++i) gb[i] += g[ka * inner + i];
            }
        }
    });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t len) {
    const int nd = a.ndim();
    if (axis < 0 || axis >= nd) throw IndexError("slice: axis out of range");
    if (start < 0 || len < 0 || start + len > a.dim(axis))
        throw IndexError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) + ") exceeds axis size " + std::to_string(a.dim(axis)));

    Shape out_shape = a.shape();
    out_shape[axis] = len;
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= a.dim(d);
    const std::int64_t ka = a.dim(axis);

    std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
    const T* pa = a.data().data();
    for (std::int64_t ou = 0; ou < outer; ++ou)
        std::copy_n(pa + (ou * ka + start) * inner, len * inner, out.data() + ou * len * inner);

    auto ia = a.impl();
    return make_op<T>(out_shape, std::move(out), {ia}, [ia, outer, inner, ka, start, len](TensorImpl<T>& o) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            const T* g = o.grad.data() + ou * len * inner;
            T* ga = ia->grad.data() + (ou * ka + start) * inner;
            for (std::int64_t i = 0; i < len * inner; ++i) ga[i] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------
// instantiations
// ---------------------------------------------------------------------------

template class Tensor<float>;
template class Tensor<double>;

#define VSEG_INSTANTIATE_OPS(T)                                                           \
    template void backward<T>(const Tensor<T>&);                                          \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> safe_div<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> add<T>(const Tensor<T>&, double);                                  \
    template Tensor<T> sub<T>(const Tensor<T>&, double);                                  \
    template Tensor<T> mul<T>(const Tensor<T>&, double);                                  \
    template Tensor<T> div<T>(const Tensor<T>&, double);                                  \
    template Tensor<T> exp<T>(const Tensor<T>&);                                          \
    template Tensor<T> log<T>(const Tensor<T>&);                                          \
    template Tensor<T> clamp_min<T>(const Tensor<T>&, double);                            \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, double);                           \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                      \
    template Tensor<T> softmax<T>(const Tensor<T>&, int);                                 \
    template Tensor<T> sum<T>(const Tensor<T>&, const std::vector<int>&);                 \
    template Tensor<T> mean<T>(const Tensor<T>&, const std::vector<int>&);                \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                      \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                     \
    template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, int);                \
    template Tensor<T> slice<T>(const Tensor<T>&, int, std::int64_t, std::int64_t);

VSEG_INSTANTIATE_OPS(float)
VSEG_INSTANTIATE_OPS(double)

} // namespace vseg
