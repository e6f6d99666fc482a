#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vseg/errors.hpp"

namespace vseg {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
Shape strides_of(const Shape& shape); // row-major, in elements
std::string shape_str(const Shape& shape);

// Thread-local autograd mode. Ops record the tape only while enabled.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad; // empty until first accumulation; same length as data once live

    // tape record: parents plus a pull-style backward that routes this->grad into them
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    std::function<void(TensorImpl<T>&)> backward_fn;
    std::string name;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

// Value-semantic handle; copies alias the same storage/tape node.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return impl_->numel(); }

    std::vector<T>& data() { return impl_->data; }
    const std::vector<T>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<T>& grad();
    const std::vector<T>& grad() const;
    void zero_grad();

    T item() const; // scalar tensors only

    const std::string& name() const { return impl_->name; }
    void set_name(std::string n) { impl_->name = std::move(n); }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<TensorImpl<T>> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; interior gradients are reset at the start of each sweep.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {
// Wraps op results onto the tape. Null parents are skipped; the tape entry is
// recorded only while grad mode is on and some parent requires grad.
template <typename T>
Tensor<T> make_node(Shape shape, std::vector<T> data,
                    std::vector<std::shared_ptr<TensorImpl<T>>> parents,
                    std::function<void(TensorImpl<T>&)> backward_fn);
} // namespace detail

// ---- elementwise ----
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, double s);
template <typename T> Tensor<T> sub(const Tensor<T>& a, double s);
template <typename T> Tensor<T> mul(const Tensor<T>& a, double s);
template <typename T> Tensor<T> div(const Tensor<T>& a, double s);

// a/b with the convention 0/0 := 0 (zero gradient there as well)
template <typename T> Tensor<T> safe_div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> clamp_min(const Tensor<T>& a, double lo);

// ---- reductions ----
template <typename T> Tensor<T> sum(const Tensor<T>& a, const std::vector<int>& axes);
template <typename T> Tensor<T> mean(const Tensor<T>& a, const std::vector<int>& axes);
template <typename T> Tensor<T> sum_all(const Tensor<T>& a);
template <typename T> Tensor<T> mean_all(const Tensor<T>& a);

// ---- activations ----
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, double leakiness);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> softmax(const Tensor<T>& a, int axis);

// ---- structural ----
template <typename T> Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t len);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, double s) { return mul(a, s); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, double s) { return add(a, s); }

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace vseg
