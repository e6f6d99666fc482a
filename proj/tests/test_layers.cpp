#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vseg/layers.hpp"

using vseg::HeadMode;
using vseg::ModelConfig;
using vseg::Shape;
using vseg::Tensor;
using vseg::UNet;
using vtest::fd_check;
using vtest::rand_tensor;

namespace {

ModelConfig desk_config(int heads = 1) {
    ModelConfig cfg;
    cfg.in_channels = 4;
    cfg.base_features = 4;
    cfg.depth = 3;
    cfg.num_classes = 4;
    cfg.head_mode = HeadMode::Softmax;
    cfg.num_heads = heads;
    return cfg;
}

} // namespace

TEST_CASE("model config validation") {
    CHECK_NOTHROW(desk_config().validate());

    auto bad = desk_config();
    bad.depth = 1;
    CHECK_THROWS_AS(bad.validate(), vseg::ConfigError);

    bad = desk_config();
    bad.num_classes = 0;
    CHECK_THROWS_AS(bad.validate(), vseg::ConfigError);

    bad = desk_config();
    bad.num_regions = 3; // both heads active
    CHECK_THROWS_AS(bad.validate(), vseg::ConfigError);

    bad = desk_config();
    bad.head_mode = HeadMode::Sigmoid; // sigmoid mode with num_classes set
    CHECK_THROWS_AS(bad.validate(), vseg::ConfigError);

    bad = desk_config();
    bad.num_heads = 0;
    CHECK_THROWS_AS(bad.validate(), vseg::ConfigError);
}

TEST_CASE("encoder channel ladder doubles from base") {
    ModelConfig cfg;
    cfg.base_features = 30;
    cfg.depth = 5;
    CHECK(cfg.features_at(0) == 30);
    CHECK(cfg.features_at(1) == 60);
    CHECK(cfg.features_at(2) == 120);
    CHECK(cfg.features_at(3) == 240);
    CHECK(cfg.features_at(4) == 480);
}

TEST_CASE("build determinism and parameter census") {
    auto a = UNet<float>::build(desk_config(), 1234);
    auto b = UNet<float>::build(desk_config(), 1234);
    auto c = UNet<float>::build(desk_config(), 99);

    auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_diff_seed = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        if (pa[i].tensor.data() != pb[i].tensor.data()) all_equal = false;
        if (pa[i].tensor.data() != pc[i].tensor.data()) any_diff_seed = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);
    CHECK(a.parameter_count() == c.parameter_count());

    // hand-counted census for base=2, depth=2, in=4, classes=3
    ModelConfig tiny;
    tiny.in_channels = 4;
    tiny.base_features = 2;
    tiny.depth = 2;
    tiny.num_classes = 3;
    CHECK(UNet<float>::build(tiny, 5).parameter_count() == 1363);

    // every parameter is a grad leaf
    for (const auto& p : pa) CHECK(p.tensor.requires_grad());
}

TEST_CASE("forward shape contract and validation") {
    auto net = UNet<float>::build(desk_config(), 7);
    vseg::Rng rng(3);
    std::vector<float> v(4 * 16 * 16 * 16);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from_data({1, 4, 16, 16, 16}, std::move(v));

    vseg::NoGradGuard ng;
    auto y = net.forward(x, 0);
    CHECK(y.shape() == Shape{1, 4, 16, 16, 16});

    // same input twice -> identical logits
    auto y2 = net.forward(x, 0);
    CHECK(y.data() == y2.data());

    CHECK_THROWS_AS(net.forward(x, 1), vseg::IndexError);
    CHECK_THROWS_AS(net.forward(x, -1), vseg::IndexError);
    CHECK_THROWS_AS(net.forward(Tensor<float>::zeros({1, 3, 16, 16, 16})), vseg::ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor<float>::zeros({1, 4, 10, 16, 16})), vseg::ShapeError);
}

TEST_CASE("heads share the trunk; copied head weights give equal outputs") {
    auto net = UNet<float>::build(desk_config(2), 21);
    auto params = net.parameters();
    Tensor<float> h0w, h0b, h1w, h1b;
    for (auto& p : params) {
        if (p.name == "head0.w") h0w = p.tensor;
        if (p.name == "head0.b") h0b = p.tensor;
        if (p.name == "head1.w") h1w = p.tensor;
        if (p.name == "head1.b") h1b = p.tensor;
    }
    REQUIRE(h1w.defined());

    vseg::Rng rng(4);
    std::vector<float> v(4 * 8 * 8 * 8);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from_data({1, 4, 8, 8, 8}, std::move(v));

    vseg::NoGradGuard ng;
    auto ya = net.forward(x, 0);
    auto yb = net.forward(x, 1);
    bool differ = ya.data() != yb.data();
    CHECK(differ); // independently initialized heads

    h1w.data() = h0w.data();
    h1b.data() = h0b.data();
    auto yc = net.forward(x, 1);
    CHECK(yc.data() == ya.data());
}

TEST_CASE("head nonlinearities: softmax sums to one, sigmoid stays in (0,1)") {
    vseg::Rng rng(5);
    std::vector<float> v(4 * 8 * 8 * 8);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from_data({1, 4, 8, 8, 8}, std::move(v));
    vseg::NoGradGuard ng;

    auto soft = UNet<float>::build(desk_config(), 31);
    auto probs = soft.predict_probs(x, 0);
    const std::int64_t S = 8 * 8 * 8;
    for (std::int64_t i = 0; i < S; ++i) {
        double total = 0;
        for (std::int64_t k = 0; k < 4; ++k) total += probs.data()[k * S + i];
        CHECK(std::abs(total - 1.0) < 1e-5);
    }

    ModelConfig rcfg = desk_config();
    rcfg.num_classes = 0;
    rcfg.num_regions = 3;
    rcfg.head_mode = HeadMode::Sigmoid;
    auto sig = UNet<float>::build(rcfg, 32);
    auto r = sig.predict_probs(x, 0);
    CHECK(r.dim(1) == 3);
    for (float p : r.data()) {
        CHECK(p > 0.0f);
        CHECK(p < 1.0f);
    }
}

TEST_CASE("tiny net end-to-end gradients match finite differences") {
    ModelConfig tiny;
    tiny.in_channels = 2;
    tiny.base_features = 2;
    tiny.depth = 2;
    tiny.num_classes = 2;
    auto net = UNet<double>::build(tiny, 71);

    vseg::Rng rng(6);
    auto x = rand_tensor(rng, {1, 2, 8, 8, 8}, -1.0, 1.0);
    auto probe = rand_tensor(rng, {1, 2, 8, 8, 8}, -1.0, 1.0, false);

    std::vector<Tensor<double>> leaves{x};
    for (auto& p : net.parameters()) leaves.push_back(p.tensor);
    fd_check([&] { return vseg::sum_all(vseg::mul(net.forward(x, 0), probe)); }, leaves, 1e-3);
}
