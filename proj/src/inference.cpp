#include "vseg/inference.hpp"

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <utility>

#include "vseg/errors.hpp"
#include "vseg/regions.hpp"
#include "vseg/tensor.hpp"
#include "vseg/textio.hpp"

namespace vseg {

namespace {

namespace fs = std::filesystem;

// Rough upper bound on forward-pass activation memory: input and output
// maps plus the encoder/decoder feature pyramid, which is dominated by the
// finest level. Deliberately pessimistic; it only gates clearly oversized
// volumes.
std::uint64_t activation_estimate(const ModelConfig& mc, const std::array<std::int64_t, 3>& padded) {
    const std::uint64_t voxels = static_cast<std::uint64_t>(padded[0]) *
                                 static_cast<std::uint64_t>(padded[1]) *
                                 static_cast<std::uint64_t>(padded[2]);
    const std::uint64_t per_voxel_channels = static_cast<std::uint64_t>(mc.in_channels) +
                                             static_cast<std::uint64_t>(mc.head_channels()) +
                                             12 * static_cast<std::uint64_t>(mc.base_features);
    return voxels * per_voxel_channels * sizeof(float);
}

void flip_buffer(const float* src, float* dst, const std::array<std::int64_t, 3>& shape,
                 const std::array<bool, 3>& axes) {
    const std::int64_t d = shape[0], h = shape[1], w = shape[2];
    for (std::int64_t z = 0; z < d; ++z) {
        const std::int64_t sz = axes[0] ? d - 1 - z : z;
        for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = axes[1] ? h - 1 - y : y;
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t sx = axes[2] ? w - 1 - x : x;
                dst[(z * h + y) * w + x] = src[(sz * h + sy) * w + sx];
            }
        }
    }
}

} // namespace

Case flip_case(const Case& c, const std::array<bool, 3>& axes) {
    Case out = c;
    const auto& shape = c.modalities[0].shape;
    for (std::size_t m = 0; m < out.modalities.size(); ++m)
        flip_buffer(c.modalities[m].data.data(), out.modalities[m].data.data(), shape, axes);
    if (c.label) {
        const std::int64_t d = shape[0], h = shape[1], w = shape[2];
        const auto& src = c.label->data;
        auto& dst = out.label->data;
        for (std::int64_t z = 0; z < d; ++z) {
            const std::int64_t sz = axes[0] ? d - 1 - z : z;
            for (std::int64_t y = 0; y < h; ++y) {
                const std::int64_t sy = axes[1] ? h - 1 - y : y;
                for (std::int64_t x = 0; x < w; ++x) {
                    const std::int64_t sx = axes[2] ? w - 1 - x : x;
                    dst[(z * h + y) * w + x] = src[(sz * h + sy) * w + sx];
                }
            }
        }
    }
    return out;
}

Prediction predict_volume(const UNet<float>& net, const Case& c, int head_index,
                          std::uint64_t budget_bytes) {
    c.validate();
    const ModelConfig& mc = net.config();
    const auto& shape = c.modalities[0].shape;
    const std::int64_t divisor = std::int64_t{1} << (mc.depth - 1);

    std::array<std::int64_t, 3> padded{};
    std::array<std::int64_t, 3> lo{};
    for (int d = 0; d < 3; ++d) {
        const std::int64_t rem = shape[d] % divisor;
        const std::int64_t total = rem == 0 ? 0 : divisor - rem;
        lo[d] = total / 2;
        padded[d] = shape[d] + total;
    }

    const std::uint64_t estimate = activation_estimate(mc, padded);
    if (estimate > budget_bytes)
        throw CapacityError("volume " + c.id + " needs ~" + std::to_string(estimate) +
                            " bytes of activations, over the budget of " +
                            std::to_string(budget_bytes) + "; tile the volume or raise the budget");

    const std::int64_t pd = padded[0], ph = padded[1], pw = padded[2];
    const std::int64_t nm = static_cast<std::int64_t>(c.modalities.size());
    std::vector<float> buf(static_cast<std::size_t>(nm * pd * ph * pw), 0.0f);
    for (std::int64_t m = 0; m < nm; ++m) {
        const float* src = c.modalities[static_cast<std::size_t>(m)].data.data();
        float* dst = buf.data() + m * pd * ph * pw;
        for (std::int64_t z = 0; z < shape[0]; ++z)
            for (std::int64_t y = 0; y < shape[1]; ++y) {
                const float* row = src + (z * shape[1] + y) * shape[2];
                std::copy_n(row, shape[2],
                            dst + ((z + lo[0]) * ph + (y + lo[1])) * pw + lo[2]);
            }
    }

    NoGradGuard guard;
    Tensor<float> x = Tensor<float>::from_data(Shape{1, nm, pd, ph, pw}, std::move(buf));
    Tensor<float> probs = net.predict_probs(x, head_index);

    const std::int64_t k = mc.head_channels();
    std::vector<float> cropped(static_cast<std::size_t>(k * shape[0] * shape[1] * shape[2]));
    const float* pp = probs.data().data();
    for (std::int64_t ch = 0; ch < k; ++ch)
        for (std::int64_t z = 0; z < shape[0]; ++z)
            for (std::int64_t y = 0; y < shape[1]; ++y) {
                const float* row = pp + ((ch * pd + z + lo[0]) * ph + y + lo[1]) * pw + lo[2];
                std::copy_n(row, shape[2],
                            cropped.data() + ((ch * shape[0] + z) * shape[1] + y) * shape[2]);
            }

    Prediction out;
    out.probs = Tensor<float>::from_data(Shape{k, shape[0], shape[1], shape[2]}, std::move(cropped));
    out.head_mode = mc.head_mode;
    out.spacing = c.modalities[0].spacing;
    out.case_id = c.id;
    out.provenance.push_back("forward head=" + std::to_string(head_index));
    return out;
}

Prediction predict_tta(const UNet<float>& net, const Case& c, int head_index,
                       std::uint64_t budget_bytes) {
    Prediction acc;
    std::vector<float> sum;
    for (int f = 0; f < 8; ++f) {
        const std::array<bool, 3> axes{(f & 4) != 0, (f & 2) != 0, (f & 1) != 0};
        Prediction p = predict_volume(net, flip_case(c, axes), head_index, budget_bytes);

        // un-flip each channel back into case orientation
        const auto& sh = p.probs.shape();
        const std::array<std::int64_t, 3> vol{sh[1], sh[2], sh[3]};
        const std::int64_t n = vol[0] * vol[1] * vol[2];
        std::vector<float> unflipped(static_cast<std::size_t>(sh[0] * n));
        for (std::int64_t ch = 0; ch < sh[0]; ++ch)
            flip_buffer(p.probs.data().data() + ch * n, unflipped.data() + ch * n, vol, axes);

        if (f == 0) {
            acc = std::move(p);
            sum = std::move(unflipped);
        } else {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += unflipped[i];
        }
    }
    for (float& v : sum) v *= 0.125f;
    acc.probs = Tensor<float>::from_data(acc.probs.shape(), std::move(sum));
    acc.provenance.clear();
    acc.provenance.push_back("forward head=" + std::to_string(head_index) + " tta=mirror8");
    return acc;
}

Prediction ensemble(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw ContractError("ensemble needs at least one prediction");
    const auto& first = preds.front();
    for (const Prediction& p : preds) {
        if (p.head_mode != first.head_mode)
            throw ContractError("ensemble mixes softmax and sigmoid predictions");
        if (p.probs.shape() != first.probs.shape())
            throw ShapeError("ensemble members disagree on probability shape");
    }
    std::vector<float> sum = first.probs.data();
    for (std::size_t i = 1; i < preds.size(); ++i) {
        const float* q = preds[i].probs.data().data();
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += q[j];
    }
    const float inv = 1.0f / static_cast<float>(preds.size());
    for (float& v : sum) v *= inv;

    Prediction out;
    out.probs = Tensor<float>::from_data(first.probs.shape(), std::move(sum));
    out.head_mode = first.head_mode;
    out.spacing = first.spacing;
    out.case_id = first.case_id;
    for (const Prediction& p : preds)
        out.provenance.insert(out.provenance.end(), p.provenance.begin(), p.provenance.end());
    return out;
}

LabelVolume predicted_labels(const Prediction& p, float threshold) {
    const auto& sh = p.probs.shape();
    const std::int64_t k = sh[0];
    const std::int64_t n = sh[1] * sh[2] * sh[3];
    LabelVolume out;
    out.shape = {sh[1], sh[2], sh[3]};
    out.spacing = p.spacing;
    out.data.resize(static_cast<std::size_t>(n));

    if (p.head_mode == HeadMode::Softmax) {
        if (k > static_cast<std::int64_t>(kClassLabels.size()))
            throw ContractError("softmax prediction has more channels than known class labels");
        const float* pp = p.probs.data().data();
        for (std::int64_t i = 0; i < n; ++i) {
            std::int64_t best = 0;
            float best_p = pp[i];
            for (std::int64_t ch = 1; ch < k; ++ch) {
                const float v = pp[ch * n + i];
                if (v > best_p) { // first index wins ties
                    best_p = v;
                    best = ch;
                }
            }
            out.data[static_cast<std::size_t>(i)] = kClassLabels[static_cast<std::size_t>(best)];
        }
        return out;
    }

    if (k != 3)
        throw ContractError("sigmoid prediction needs exactly the 3 region channels to decode");
    const float* pp = p.probs.data().data();
    const std::size_t un = static_cast<std::size_t>(n);
    out.data = regions_to_labels(std::span<const float>(pp, un),
                                 std::span<const float>(pp + n, un),
                                 std::span<const float>(pp + 2 * n, un), out.shape, out.spacing,
                                 threshold)
                   .data;
    return out;
}

void write_prediction(const Prediction& p, const std::string& dir) {
    fs::create_directories(dir);
    const auto& sh = p.probs.shape();
    const std::int64_t n = sh[1] * sh[2] * sh[3];
    for (std::int64_t ch = 0; ch < sh[0]; ++ch) {
        Volume v;
        v.shape = {sh[1], sh[2], sh[3]};
        v.spacing = p.spacing;
        v.data.assign(p.probs.data().data() + ch * n, p.probs.data().data() + (ch + 1) * n);
        write_volume(v, (fs::path(dir) / (p.case_id + "_prob" + std::to_string(ch) + ".vseg")).string());
    }

    std::ofstream f(fs::path(dir) / (p.case_id + "_pred.txt"));
    if (!f) throw ParseError("cannot write prediction sidecar for " + p.case_id);
    f << "head_mode=" << (p.head_mode == HeadMode::Softmax ? "softmax" : "sigmoid") << "\n";
    f << "channels=" << sh[0] << "\n";
    for (const std::string& s : p.provenance) f << "provenance=" << s << "\n";
}

Prediction read_prediction(const std::string& dir, const std::string& id) {
    const fs::path sidecar = fs::path(dir) / (id + "_pred.txt");
    std::ifstream f(sidecar);
    if (!f) throw ParseError("cannot open prediction sidecar " + sidecar.string());

    Prediction out;
    out.case_id = id;
    std::int64_t channels = -1;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(sidecar.string() + ": expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "head_mode") {
            if (val == "softmax") out.head_mode = HeadMode::Softmax;
            else if (val == "sigmoid") out.head_mode = HeadMode::Sigmoid;
            else throw ParseError(sidecar.string() + ": unknown head_mode '" + val + "'");
        } else if (key == "channels") {
            channels = parse_int(val, "channels");
            if (channels <= 0) throw ParseError(sidecar.string() + ": channels must be positive");
        } else if (key == "provenance") {
            out.provenance.push_back(val);
        } else {
            throw ParseError(sidecar.string() + ": unknown key '" + key + "'");
        }
    }
    if (channels < 0) throw ParseError(sidecar.string() + ": missing channels line");

    std::vector<float> buf;
    std::array<std::int64_t, 3> shape{};
    for (std::int64_t ch = 0; ch < channels; ++ch) {
        Volume v = read_volume((fs::path(dir) / (id + "_prob" + std::to_string(ch) + ".vseg")).string());
        if (ch == 0) {
            shape = v.shape;
            out.spacing = v.spacing;
            buf.reserve(static_cast<std::size_t>(channels) * v.data.size());
        } else if (v.shape != shape) {
            throw ShapeError("prediction channels of " + id + " disagree on shape");
        }
        buf.insert(buf.end(), v.data.begin(), v.data.end());
    }
    out.probs = Tensor<float>::from_data(Shape{channels, shape[0], shape[1], shape[2]}, std::move(buf));
    return out;
}

} // namespace vseg
