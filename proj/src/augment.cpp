#include "vseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "vseg/errors.hpp"

namespace vseg {

void AugmentConfig::validate() const {
    for (double r : rotation_max_deg)
        if (!(r >= 0.0)) throw ConfigError("rotation_max_deg must be nonnegative");
    if (!(scale_range[0] > 0.0) || !(scale_range[1] >= scale_range[0]))
        throw ConfigError("scale_range must be a positive nondecreasing interval");
    if (!(elastic_grid_spacing >= 1.0)) throw ConfigError("elastic_grid_spacing must be at least 1");
    if (!(elastic_sigma >= 0.0)) throw ConfigError("elastic_sigma must be nonnegative");
    if (!(gamma_range[0] > 0.0) || !(gamma_range[1] >= gamma_range[0]))
        throw ConfigError("gamma_range must be a positive nondecreasing interval");
    if (!(transform_prob >= 0.0 && transform_prob <= 1.0))
        throw ConfigError("transform_prob must lie in [0,1]");
    if (!(mirror_prob >= 0.0 && mirror_prob <= 1.0)) throw ConfigError("mirror_prob must lie in [0,1]");
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

// Rotation about coordinate axis `axis` (0=z, 1=y, 2=x) mixing the other two
// coordinates; vectors are ordered (z, y, x).
Mat3 axis_rotation(int axis, double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    const int u = (axis == 0) ? 1 : 0;
    const int v = (axis == 2) ? 1 : 2;
    Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    r[u][u] = c;
    r[u][v] = -s;
    r[v][u] = s;
    r[v][v] = c;
    return r;
}

// Trilinearly interpolated vector field on a coarse control grid covering the
// patch; used for the elastic displacement.
struct ControlGrid {
    std::int64_t g;
    double cell;
    std::vector<double> disp; // g^3 control points x 3 components

    ControlGrid(std::int64_t patch, double spacing, double sigma, Rng& rng) : cell(spacing) {
        g = static_cast<std::int64_t>((static_cast<double>(patch - 1)) / spacing) + 2;
        disp.resize(static_cast<std::size_t>(g * g * g * 3));
        for (auto& d : disp) d = rng.normal(0.0, sigma);
    }

    std::array<double, 3> at(double z, double y, double x) const {
        auto tap = [this](double p, std::int64_t& i0, double& f) {
            const double t = std::min(p / cell, static_cast<double>(g - 1));
            i0 = std::min<std::int64_t>(static_cast<std::int64_t>(t), g - 2);
            f = t - static_cast<double>(i0);
        };
        std::int64_t z0, y0, x0;
        double fz, fy, fx;
        tap(z, z0, fz);
        tap(y, y0, fy);
        tap(x, x0, fx);
        std::array<double, 3> out{0.0, 0.0, 0.0};
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
                    const std::size_t base = static_cast<std::size_t>(
                        (((z0 + dz) * g + y0 + dy) * g + x0 + dx) * 3);
                    for (int k = 0; k < 3; ++k) out[k] += w * disp[base + k];
                }
        return out;
    }
};

float sample_trilinear(const float* ch, std::int64_t P, double z, double y, double x) {
    const std::int64_t z0 = static_cast<std::int64_t>(std::floor(z));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const double fz = z - static_cast<double>(z0);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const std::int64_t zz = z0 + dz, yy = y0 + dy, xx = x0 + dx;
                if (zz < 0 || zz >= P || yy < 0 || yy >= P || xx < 0 || xx >= P) continue;
                const double w = (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
                acc += w * static_cast<double>(ch[(zz * P + yy) * P + xx]);
            }
    return static_cast<float>(acc);
}

std::uint8_t sample_nearest(const std::uint8_t* lab, std::int64_t P, double z, double y, double x) {
    const std::int64_t zz = static_cast<std::int64_t>(std::llround(z));
    const std::int64_t yy = static_cast<std::int64_t>(std::llround(y));
    const std::int64_t xx = static_cast<std::int64_t>(std::llround(x));
    if (zz < 0 || zz >= P || yy < 0 || yy >= P || xx < 0 || xx >= P) return 0;
    return lab[(zz * P + yy) * P + xx];
}

} // namespace

Patch augment(const Patch& in, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::int64_t P = in.size;
    const std::int64_t pv = in.voxels_per_channel();

    // Fixed draw order regardless of which transforms later fire.
    const bool do_rot = rng.bernoulli(cfg.transform_prob);
    double angles[3] = {0.0, 0.0, 0.0};
    if (do_rot)
        for (int d = 0; d < 3; ++d)
            angles[d] = rng.uniform(-cfg.rotation_max_deg[d], cfg.rotation_max_deg[d]) *
                        (3.14159265358979323846 / 180.0);
    const bool do_scale = rng.bernoulli(cfg.transform_prob);
    const double scale = do_scale ? rng.uniform(cfg.scale_range[0], cfg.scale_range[1]) : 1.0;
    const bool do_elastic = rng.bernoulli(cfg.transform_prob) && cfg.elastic_sigma > 0.0;
    std::unique_ptr<ControlGrid> elastic;
    if (do_elastic)
        elastic = std::make_unique<ControlGrid>(P, cfg.elastic_grid_spacing, cfg.elastic_sigma, rng);
    const bool do_gamma = rng.bernoulli(cfg.transform_prob);
    const double gamma = do_gamma ? rng.uniform(cfg.gamma_range[0], cfg.gamma_range[1]) : 1.0;
    bool flip[3] = {false, false, false};
    for (int d = 0; d < 3; ++d)
        if (cfg.mirror_axes[d]) flip[d] = rng.bernoulli(cfg.mirror_prob);

    Patch out;
    out.size = P;

    if (do_rot || do_scale || do_elastic) {
        // Inverse map: src = Rᵀ(p−c)/s + c + d(p), composed once per voxel.
        Mat3 rot = matmul(axis_rotation(0, angles[0]),
                          matmul(axis_rotation(1, angles[1]), axis_rotation(2, angles[2])));
        const double c = static_cast<double>(P - 1) / 2.0;
        out.image.resize(in.image.size());
        out.labels.resize(in.labels.size());
        std::int64_t i = 0;
        for (std::int64_t z = 0; z < P; ++z)
            for (std::int64_t y = 0; y < P; ++y)
                for (std::int64_t x = 0; x < P; ++x, ++i) {
                    const double q[3] = {static_cast<double>(z) - c, static_cast<double>(y) - c,
                                         static_cast<double>(x) - c};
                    double src[3];
                    for (int r = 0; r < 3; ++r) {
                        // transpose of the forward rotation
                        src[r] = (rot[0][r] * q[0] + rot[1][r] * q[1] + rot[2][r] * q[2]) / scale + c;
                    }
                    if (elastic) {
                        const auto d = elastic->at(static_cast<double>(z), static_cast<double>(y),
                                                   static_cast<double>(x));
                        for (int r = 0; r < 3; ++r) src[r] += d[r];
                    }
                    for (int m = 0; m < kNumModalities; ++m)
                        out.image[m * pv + i] =
                            sample_trilinear(in.image.data() + m * pv, P, src[0], src[1], src[2]);
                    out.labels[i] = sample_nearest(in.labels.data(), P, src[0], src[1], src[2]);
                }
    } else {
        out.image = in.image;
        out.labels = in.labels;
    }

    if (do_gamma) {
        for (int m = 0; m < kNumModalities; ++m) {
            float* ch = out.image.data() + m * pv;
            const auto [lo_it, hi_it] = std::minmax_element(ch, ch + pv);
            const double lo = *lo_it, hi = *hi_it;
            if (hi - lo < 1e-12) continue; // constant channel: gamma is a no-op
            const double span = hi - lo;
            for (std::int64_t i = 0; i < pv; ++i)
                ch[i] = static_cast<float>(lo + span * std::pow((ch[i] - lo) / span, gamma));
        }
    }

    if (flip[0] || flip[1] || flip[2]) {
        Patch flipped;
        flipped.size = P;
        flipped.image.resize(out.image.size());
        flipped.labels.resize(out.labels.size());
        std::int64_t i = 0;
        for (std::int64_t z = 0; z < P; ++z)
            for (std::int64_t y = 0; y < P; ++y)
                for (std::int64_t x = 0; x < P; ++x, ++i) {
                    const std::int64_t sz = flip[0] ? P - 1 - z : z;
                    const std::int64_t sy = flip[1] ? P - 1 - y : y;
                    const std::int64_t sx = flip[2] ? P - 1 - x : x;
                    const std::int64_t j = (sz * P + sy) * P + sx;
                    for (int m = 0; m < kNumModalities; ++m)
                        flipped.image[m * pv + i] = out.image[m * pv + j];
                    flipped.labels[i] = out.labels[j];
                }
        out = std::move(flipped);
    }

    return out;
}

} // namespace vseg
