#include "vseg/layers.hpp"

#include <cmath>

namespace vseg {

void ModelConfig::validate() const {
    if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
    if (base_features < 1) throw ConfigError("model: base_features must be >= 1");
    if (depth < 2) throw ConfigError("model: depth must be >= 2");
    if (num_heads < 1) throw ConfigError("model: num_heads must be >= 1");
    if (leakiness < 0.0) throw ConfigError("model: leakiness must be >= 0");
    if (head_mode == HeadMode::Softmax) {
        if (num_classes < 2 || num_regions != 0)
            throw ConfigError("model: softmax head needs num_classes >= 2 and num_regions unset");
    } else {
        if (num_regions < 1 || num_classes != 0)
            throw ConfigError("model: sigmoid head needs num_regions >= 1 and num_classes unset");
    }
}

int ModelConfig::head_channels() const {
    return head_mode == HeadMode::Softmax ? num_classes : num_regions;
}

int ModelConfig::features_at(int level) const {
    return base_features << level;
}

namespace {

// fan-in scaled uniform init matched to the leaky ReLU gain
template <typename T>
Tensor<T> init_conv_weight(Rng& rng, Shape shape, double leakiness) {
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    const double bound = std::sqrt(6.0 / ((1.0 + leakiness * leakiness) * static_cast<double>(fan_in)));
    std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>::from_data(std::move(shape), std::move(v), true);
}

template <typename T>
ConvBlock<T> init_block(Rng& rng, int cin, int cout, int k, double leakiness) {
    ConvBlock<T> b;
    b.w = init_conv_weight<T>(rng, {cout, cin, k, k, k}, leakiness);
    b.b = Tensor<T>::zeros({cout}, true);
    b.gamma = Tensor<T>::full({cout}, T(1), true);
    b.beta = Tensor<T>::zeros({cout}, true);
    return b;
}

template <typename T>
Tensor<T> run_block(const ConvBlock<T>& blk, const Tensor<T>& x, double leakiness) {
    return leaky_relu(instance_norm(conv3d(x, blk.w, blk.b, 1, Padding::Same), blk.gamma, blk.beta, 1e-5),
                      leakiness);
}

} // namespace

template <typename T>
UNet<T> UNet<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    UNet<T> net;
    net.cfg_ = cfg;
    Rng rng(seed);

    for (int l = 0; l < cfg.depth; ++l) {
        const int f = cfg.features_at(l);
        const int cin = l == 0 ? cfg.in_channels : cfg.features_at(l - 1);
        net.enc_.push_back({init_block<T>(rng, cin, f, 3, cfg.leakiness),
                            init_block<T>(rng, f, f, 3, cfg.leakiness)});
    }
    net.reduce_w_.resize(static_cast<std::size_t>(cfg.depth - 1));
    net.reduce_b_.resize(static_cast<std::size_t>(cfg.depth - 1));
    net.dec_.resize(static_cast<std::size_t>(cfg.depth - 1));
    for (int l = cfg.depth - 2; l >= 0; --l) {
        const int f = cfg.features_at(l);
        net.reduce_w_[l] = init_conv_weight<T>(rng, {f, 2 * f, 1, 1, 1}, cfg.leakiness);
        net.reduce_b_[l] = Tensor<T>::zeros({f}, true);
        net.dec_[l] = {init_block<T>(rng, 2 * f, f, 3, cfg.leakiness),
                       init_block<T>(rng, f, f, 3, cfg.leakiness)};
    }
    for (int h = 0; h < cfg.num_heads; ++h) {
        net.head_w_.push_back(init_conv_weight<T>(rng, {cfg.head_channels(), cfg.base_features, 1, 1, 1}, cfg.leakiness));
        net.head_b_.push_back(Tensor<T>::zeros({cfg.head_channels()}, true));
    }
    return net;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, int head_index) const {
    if (enc_.empty()) throw ContractError("forward on an unbuilt net");
    if (head_index < 0 || head_index >= cfg_.num_heads)
        throw IndexError("head index " + std::to_string(head_index) + " out of range (num_heads=" +
                         std::to_string(cfg_.num_heads) + ")");
    if (!x.defined() || x.ndim() != 5) throw ShapeError("forward: expected NCDHW input");
    if (x.dim(1) != cfg_.in_channels)
        throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) + " channels, got " +
                         std::to_string(x.dim(1)));
    const std::int64_t div = std::int64_t(1) << (cfg_.depth - 1);
    for (int d = 2; d < 5; ++d)
        if (x.dim(d) % div)
            throw ShapeError("forward: spatial dims " + shape_str({x.dim(2), x.dim(3), x.dim(4)}) +
                             " must be divisible by " + std::to_string(div));

    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (int l = 0; l < cfg_.depth; ++l) {
        if (l > 0) h = maxpool3d(h, 2, 2);
        h = run_block(enc_[l][0], h, cfg_.leakiness);
        h = run_block(enc_[l][1], h, cfg_.leakiness);
        if (l < cfg_.depth - 1) skips.push_back(h);
    }
    for (int l = cfg_.depth - 2; l >= 0; --l) {
        h = conv3d(h, reduce_w_[l], reduce_b_[l], 1, Padding::Same);
        h = upsample_trilinear(h, 2);
        h = concat(h, skips[l], 1);
        h = run_block(dec_[l][0], h, cfg_.leakiness);
        h = run_block(dec_[l][1], h, cfg_.leakiness);
    }
    return conv3d(h, head_w_[head_index], head_b_[head_index], 1, Padding::Same);
}

template <typename T>
Tensor<T> UNet<T>::predict_probs(const Tensor<T>& x, int head_index) const {
    auto logits = forward(x, head_index);
    return cfg_.head_mode == HeadMode::Softmax ? softmax(logits, 1) : sigmoid(logits);
}

template <typename T>
std::vector<NamedParam<T>> UNet<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    auto add_block = [&out](const std::string& prefix, const ConvBlock<T>& b) {
        out.push_back({prefix + ".w", b.w});
        out.push_back({prefix + ".b", b.b});
        out.push_back({prefix + ".gamma", b.gamma});
        out.push_back({prefix + ".beta", b.beta});
    };
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        add_block("enc" + std::to_string(l) + ".block0", enc_[l][0]);
        add_block("enc" + std::to_string(l) + ".block1", enc_[l][1]);
    }
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        out.push_back({"dec" + std::to_string(l) + ".reduce.w", reduce_w_[l]});
        out.push_back({"dec" + std::to_string(l) + ".reduce.b", reduce_b_[l]});
        add_block("dec" + std::to_string(l) + ".block0", dec_[l][0]);
        add_block("dec" + std::to_string(l) + ".block1", dec_[l][1]);
    }
    for (std::size_t h = 0; h < head_w_.size(); ++h) {
        out.push_back({"head" + std::to_string(h) + ".w", head_w_[h]});
        out.push_back({"head" + std::to_string(h) + ".b", head_b_[h]});
    }
    return out;
}

template <typename T>
std::int64_t UNet<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

template class UNet<float>;
template class UNet<double>;

} // namespace vseg
