#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <doctest.h>

#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vtest {

inline vseg::Tensor<double> rand_tensor(vseg::Rng& rng, vseg::Shape shape, double lo, double hi,
                                        bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(vseg::numel_of(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return vseg::Tensor<double>::from_data(std::move(shape), std::move(v), requires_grad);
}

// Uniform values whose magnitude stays >= margin; keeps finite differences
// away from kinks (leaky_relu at 0) without biasing the sign.
inline vseg::Tensor<double> rand_tensor_margin(vseg::Rng& rng, vseg::Shape shape, double hi, double margin,
                                               bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(vseg::numel_of(shape)));
    for (auto& x : v) {
        const double m = rng.uniform(margin, hi);
        x = rng.bernoulli(0.5) ? m : -m;
    }
    return vseg::Tensor<double>::from_data(std::move(shape), std::move(v), requires_grad);
}

// Central finite-difference check (h=1e-5, 64-bit) of d(loss)/d(leaf) for
// every element of every leaf. loss_fn must rebuild the graph from the
// leaves' current data on each call.
inline void fd_check(const std::function<vseg::Tensor<double>()>& loss_fn,
                     std::vector<vseg::Tensor<double>> leaves, double tol = 1e-4, double h = 1e-5) {
    for (auto& leaf : leaves) leaf.zero_grad();
    auto loss = loss_fn();
    vseg::backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) {
        REQUIRE(leaf.has_grad());
        analytic.push_back(leaf.grad());
    }

    vseg::NoGradGuard ng;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double fp = loss_fn().item();
            data[i] = saved - h;
            const double fm = loss_fn().item();
            data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double got = analytic[li][i];
            const double denom = std::max({std::abs(fd), std::abs(got), 1e-4});
            const double rel = std::abs(got - fd) / denom;
            if (rel >= tol) {
                CAPTURE(li);
                CAPTURE(i);
                CAPTURE(fd);
                CAPTURE(got);
            }
            REQUIRE(rel < tol);
        }
    }
}

} // namespace vtest
