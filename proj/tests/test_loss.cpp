#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "vseg/loss.hpp"

using vseg::ClassSet;
using vseg::LossConfig;
using vseg::LossKind;
using vseg::Shape;
using vseg::Tensor;
using vtest::fd_check;
using vtest::rand_tensor;

using D = Tensor<double>;

namespace {

LossConfig cfg_of(ClassSet cs, double eps) {
    LossConfig c;
    c.class_set = cs;
    c.smooth_eps = eps;
    return c;
}

// random labels guaranteed to hit every class at least once
std::vector<std::uint8_t> labels_covering(vseg::Rng& rng, std::size_t n, int K) {
    std::vector<std::uint8_t> l(n);
    for (auto& x : l) x = static_cast<std::uint8_t>(rng.uniform_int(0, K - 1));
    for (int k = 0; k < K; ++k) l[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(k);
    return l;
}

} // namespace

TEST_CASE("dice: perfect one-hot agreement scores -1") {
    vseg::Rng rng(100);
    const Shape shape{2, 4, 3, 3, 3};
    auto labels = labels_covering(rng, 2 * 27, 4);
    auto v = vseg::onehot<double>(labels, shape);
    for (auto cs : {ClassSet::AllClasses, ClassSet::ForegroundOnly}) {
        auto loss = vseg::dice_loss(v, v, cfg_of(cs, 0.0));
        CHECK(std::abs(loss.item() - (-1.0)) < 1e-6);
    }
}

TEST_CASE("dice: disjoint supports score exactly 0") {
    const Shape shape{1, 2, 1, 2, 2};
    auto u = vseg::onehot<double>({0, 0, 0, 0}, shape);
    auto v = vseg::onehot<double>({1, 1, 1, 1}, shape);
    auto loss = vseg::dice_loss(u, v, cfg_of(ClassSet::AllClasses, 0.0));
    CHECK(loss.item() == 0.0);
    auto loss_fg = vseg::dice_loss(u, v, cfg_of(ClassSet::ForegroundOnly, 0.0));
    CHECK(loss_fg.item() == 0.0);
}

TEST_CASE("dice: single-class half-probability example") {
    auto u = D::from_data({1, 1, 1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
    auto v = D::from_data({1, 1, 1, 2, 2}, {1.0, 1.0, 0.0, 0.0});
    auto loss = vseg::dice_loss(u, v, cfg_of(ClassSet::AllClasses, 0.0));
    CHECK(loss.item() == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("dice: bounded in [-1, 0] and symmetric under class/voxel permutations") {
    vseg::Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        const std::int64_t K = 3, S = 8;
        auto u = vseg::softmax(rand_tensor(rng, {1, K, 2, 2, 2}, -3.0, 3.0, false), 1);
        auto labels = labels_covering(rng, S, static_cast<int>(K));
        auto v = vseg::onehot<double>(labels, u.shape());
        const double L = vseg::dice_loss(u, v, cfg_of(ClassSet::AllClasses, 0.0)).item();
        CHECK(L <= 0.0);
        CHECK(L >= -1.0);

        // permute the class axis of both tensors identically
        std::vector<std::int64_t> perm{2, 0, 1};
        std::vector<double> up(u.data().size()), vp(v.data().size());
        for (std::int64_t k = 0; k < K; ++k)
            for (std::int64_t i = 0; i < S; ++i) {
                up[k * S + i] = u.data()[perm[k] * S + i];
                vp[k * S + i] = v.data()[perm[k] * S + i];
            }
        auto u2 = D::from_data(u.shape(), std::move(up));
        auto v2 = D::from_data(v.shape(), std::move(vp));
        CHECK(vseg::dice_loss(u2, v2, cfg_of(ClassSet::AllClasses, 0.0)).item() == doctest::Approx(L).epsilon(1e-12));

        // reorder voxels identically in both tensors
        std::vector<std::int64_t> vperm(S);
        for (std::int64_t i = 0; i < S; ++i) vperm[i] = i;
        std::reverse(vperm.begin(), vperm.end());
        std::vector<double> ur(u.data().size()), vr(v.data().size());
        for (std::int64_t k = 0; k < K; ++k)
            for (std::int64_t i = 0; i < S; ++i) {
                ur[k * S + i] = u.data()[k * S + vperm[i]];
                vr[k * S + i] = v.data()[k * S + vperm[i]];
            }
        auto u3 = D::from_data(u.shape(), std::move(ur));
        auto v3 = D::from_data(v.shape(), std::move(vr));
        CHECK(vseg::dice_loss(u3, v3, cfg_of(ClassSet::AllClasses, 0.0)).item() == doctest::Approx(L).epsilon(1e-12));
    }
}

TEST_CASE("dice: validation") {
    auto u = D::zeros({1, 2, 2, 2, 2});
    CHECK_THROWS_AS(vseg::dice_loss(u, D::zeros({1, 3, 2, 2, 2}), LossConfig{}), vseg::ShapeError);
    auto one_class = D::zeros({1, 1, 2, 2, 2});
    CHECK_THROWS_AS(vseg::dice_loss(one_class, one_class, cfg_of(ClassSet::ForegroundOnly, 0.0)),
                    vseg::ConfigError);
    LossConfig bad;
    bad.smooth_eps = -1.0;
    CHECK_THROWS_AS(vseg::dice_loss(u, u, bad), vseg::ConfigError);
}

TEST_CASE("dice: gradient w.r.t. probabilities matches finite differences") {
    vseg::Rng rng(102);
    for (int rep = 0; rep < 5; ++rep) {
        auto u = rand_tensor(rng, {1, 2, 3, 3, 3}, 0.1, 0.9);
        auto labels = labels_covering(rng, 27, 2);
        auto v = vseg::onehot<double>(labels, u.shape());
        for (double eps : {0.0, 1e-5})
            fd_check([&] { return vseg::dice_loss(u, v, cfg_of(ClassSet::AllClasses, eps)); }, {u});
        fd_check([&] { return vseg::dice_loss(u, v, cfg_of(ClassSet::ForegroundOnly, 1e-5)); }, {u});
    }
}

TEST_CASE("region dice: binary agreement and closed-form half-probability value") {
    // three overlapping all-ones regions, perfect prediction
    auto m = D::full({1, 3, 2, 2, 2}, 1.0);
    CHECK(vseg::region_dice_loss(m, m, cfg_of(ClassSet::AllClasses, 0.0)).item() == doctest::Approx(-1.0));

    // p = 0.5 everywhere on an all-ones region: term 2*(0.5n)/(0.5n + n) = 2/3
    auto p = D::full({1, 1, 2, 2, 2}, 0.5);
    auto m1 = D::full({1, 1, 2, 2, 2}, 1.0);
    CHECK(vseg::region_dice_loss(p, m1, cfg_of(ClassSet::AllClasses, 0.0)).item() ==
          doctest::Approx(-2.0 / 3.0).epsilon(1e-9));

    // empty region channel with eps guard: no blowup, term near 0
    auto tiny = D::full({1, 1, 2, 2, 2}, 1e-7);
    auto empty = D::zeros({1, 1, 2, 2, 2});
    const double L = vseg::region_dice_loss(tiny, empty, cfg_of(ClassSet::AllClasses, 1e-5)).item();
    CHECK(std::isfinite(L));
    CHECK(std::abs(L) < 1e-3);

    auto not_binary = D::full({1, 1, 2, 2, 2}, 0.5);
    CHECK_THROWS_AS(vseg::region_dice_loss(p, not_binary, LossConfig{}), vseg::ValueError);
}

TEST_CASE("region dice: gradient matches finite differences") {
    vseg::Rng rng(103);
    for (int rep = 0; rep < 5; ++rep) {
        auto p = rand_tensor(rng, {1, 3, 2, 2, 2}, 0.1, 0.9);
        std::vector<double> mv(3 * 8);
        for (auto& x : mv) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        auto m = D::from_data({1, 3, 2, 2, 2}, std::move(mv));
        fd_check([&] { return vseg::region_dice_loss(p, m, cfg_of(ClassSet::AllClasses, 1e-5)); }, {p});
    }
}

TEST_CASE("cross entropy: uniform, peaked, and hand-computed values") {
    // uniform logits over 4 classes
    auto uniform = D::zeros({1, 4, 1, 1, 2});
    CHECK(vseg::cross_entropy(uniform, {0, 3}).item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    // strongly peaked on the correct class
    std::vector<double> peaked(2 * 4, 0.0);
    peaked[0 * 4 + 0] = 20.0; // class 0, both voxels ... layout [1,2,1,2,2]: K=2, S=4
    auto logits = D::from_data({1, 2, 1, 2, 2}, {20, 20, 20, 20, 0, 0, 0, 0});
    CHECK(vseg::cross_entropy(logits, {0, 0, 0, 0}).item() < 1e-6);

    // random 2-class 2-voxel case against direct evaluation
    vseg::Rng rng(104);
    const double a0 = rng.uniform(-2, 2), a1 = rng.uniform(-2, 2);
    const double b0 = rng.uniform(-2, 2), b1 = rng.uniform(-2, 2);
    auto l2 = D::from_data({1, 2, 1, 1, 2}, {a0, b0, a1, b1});
    const std::vector<std::uint8_t> lab{0, 1};
    const double p_v0 = std::exp(a0) / (std::exp(a0) + std::exp(a1));
    const double p_v1 = std::exp(b1) / (std::exp(b0) + std::exp(b1));
    const double expect = -0.5 * (std::log(p_v0) + std::log(p_v1));
    CHECK(vseg::cross_entropy(l2, lab).item() == doctest::Approx(expect).epsilon(1e-9));

    CHECK_THROWS_AS(vseg::cross_entropy(l2, {0, 2}), vseg::ValueError);
    CHECK_THROWS_AS(vseg::cross_entropy(l2, {0}), vseg::ShapeError);
}

TEST_CASE("cross entropy: gradient matches finite differences") {
    vseg::Rng rng(105);
    for (int rep = 0; rep < 5; ++rep) {
        auto logits = rand_tensor(rng, {2, 3, 2, 2, 2}, -2.0, 2.0);
        std::vector<std::uint8_t> labels(16);
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        fd_check([&] { return vseg::cross_entropy(logits, labels); }, {logits});
    }
}

TEST_CASE("combined loss: exact component sum and optimum") {
    vseg::Rng rng(106);
    auto logits = rand_tensor(rng, {1, 3, 2, 2, 2}, -2.0, 2.0, false);
    auto labels = labels_covering(rng, 8, 3);
    LossConfig cfg;
    cfg.kind = LossKind::DicePlusCe;

    const double combined = vseg::combined_loss(logits, labels, cfg).item();
    const double d = vseg::dice_loss(vseg::softmax(logits, 1), vseg::onehot<double>(labels, logits.shape()), cfg).item();
    const double c = vseg::cross_entropy(logits, labels).item();
    CHECK(combined == d + c); // exact, not approximate

    // peaked prediction sits at the joint optimum
    std::vector<double> pv(3 * 8, 0.0);
    for (std::int64_t i = 0; i < 8; ++i) pv[labels[i] * 8 + i] = 25.0;
    auto peaked = D::from_data({1, 3, 2, 2, 2}, std::move(pv));
    CHECK(vseg::combined_loss(peaked, labels, cfg).item() == doctest::Approx(-1.0).epsilon(1e-4));

    // label permutation keeps everything finite
    std::vector<std::uint8_t> rotated(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) rotated[i] = static_cast<std::uint8_t>((labels[i] + 1) % 3);
    CHECK(std::isfinite(vseg::combined_loss(logits, rotated, cfg).item()));
}

TEST_CASE("combined loss: gradient is the component sum (finite differences)") {
    vseg::Rng rng(107);
    auto logits = rand_tensor(rng, {1, 3, 2, 2, 2}, -2.0, 2.0);
    auto labels = labels_covering(rng, 8, 3);
    LossConfig cfg;
    cfg.kind = LossKind::DicePlusCe;
    fd_check([&] { return vseg::combined_loss(logits, labels, cfg); }, {logits});
}

TEST_CASE("training loss dispatches on kind") {
    vseg::Rng rng(108);
    auto logits = rand_tensor(rng, {1, 2, 2, 2, 2}, -1.0, 1.0, false);
    std::vector<std::uint8_t> labels(8);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 1));

    LossConfig cfg;
    cfg.kind = LossKind::Dice;
    CHECK(vseg::training_loss(logits, labels, cfg).item() ==
          vseg::dice_loss(vseg::softmax(logits, 1), vseg::onehot<double>(labels, logits.shape()), cfg).item());
    cfg.kind = LossKind::CrossEntropy;
    CHECK(vseg::training_loss(logits, labels, cfg).item() == vseg::cross_entropy(logits, labels).item());
    cfg.kind = LossKind::DicePlusCe;
    CHECK(vseg::training_loss(logits, labels, cfg).item() == vseg::combined_loss(logits, labels, cfg).item());
}
