#include "vseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {

namespace {

// Modality order: t1, t1ce, t2, flair.
constexpr double kTissueBase[kNumModalities] = {1.0, 1.0, 0.8, 0.9};
// Additive contrast of each tumor compartment per modality.
constexpr double kEdemaDelta[kNumModalities] = {-0.15, -0.10, 0.80, 1.00};
constexpr double kNecrosisDelta[kNumModalities] = {-0.40, -0.30, 0.30, 0.40};
constexpr double kEnhancingDelta[kNumModalities] = {0.20, 1.20, 0.20, 0.30};

// Smooth per-modality intensity field: a coarse grid of gaussian control
// values, trilinearly interpolated to voxel resolution.
struct SmoothField {
    std::int64_t gd, gh, gw;
    double cell;
    std::vector<double> values;

    SmoothField(std::int64_t size, double amplitude, Rng& rng) : cell(4.0) {
        gd = gh = gw = size / 4 + 2;
        values.resize(static_cast<std::size_t>(gd * gh * gw));
        for (auto& v : values) v = rng.normal(0.0, amplitude);
    }

    double at(double z, double y, double x) const {
        auto tap = [this](double p, std::int64_t n, std::int64_t& i0, double& f) {
            const double g = std::min(p / cell, static_cast<double>(n - 1));
            i0 = std::min<std::int64_t>(static_cast<std::int64_t>(g), n - 2);
            f = g - static_cast<double>(i0);
        };
        std::int64_t z0, y0, x0;
        double fz, fy, fx;
        tap(z, gd, z0, fz);
        tap(y, gh, y0, fy);
        tap(x, gw, x0, fx);
        auto v = [this](std::int64_t z, std::int64_t y, std::int64_t x) {
            return values[static_cast<std::size_t>((z * gh + y) * gw + x)];
        };
        double out = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    out += (dz ? fz : 1 - fz) * (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx) *
                           v(z0 + dz, y0 + dy, x0 + dx);
        return out;
    }
};

Case synth_case(const SynthConfig& cfg, std::int64_t index) {
    const std::int64_t S = cfg.size;
    const double sz = static_cast<double>(S);
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(index)));

    // Geometry. All draws happen in a fixed order so the case is a pure
    // function of (seed, index).
    double brain_sa[3], brain_c[3];
    for (double& a : brain_sa) a = rng.uniform(0.32, 0.42) * sz;
    for (double& c : brain_c) c = 0.5 * (sz - 1.0) + rng.uniform(-0.03, 0.03) * sz;
    double tumor_q[3];
    for (double& q : tumor_q) q = rng.uniform(0.92, 1.08);
    const double r_edema = rng.uniform(std::max(4.2, 0.22 * sz), 0.30 * sz);
    const double r_core = r_edema - rng.uniform(1.2, 1.6);
    const double rim_th = rng.uniform(1.0, 1.4);
    double tumor_c[3];
    for (int d = 0; d < 3; ++d) {
        const double cap = std::max(0.0, brain_sa[d] - r_edema - 0.5);
        tumor_c[d] = brain_c[d] + rng.uniform(-cap, cap);
    }
    const bool enhancing_free = rng.bernoulli(cfg.no_enhancing_fraction);

    Case c;
    c.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(index);
    c.dataset_tag = cfg.dataset_tag;

    // Labels from the nested ellipsoids.
    LabelVolume lab;
    lab.shape = {S, S, S};
    lab.spacing = cfg.spacing;
    lab.data.assign(static_cast<std::size_t>(S * S * S), 0);
    std::vector<std::uint8_t> in_brain(lab.data.size(), 0);
    std::size_t i = 0;
    for (std::int64_t z = 0; z < S; ++z)
        for (std::int64_t y = 0; y < S; ++y)
            for (std::int64_t x = 0; x < S; ++x, ++i) {
                const double p[3] = {static_cast<double>(z), static_cast<double>(y),
                                     static_cast<double>(x)};
                double bq = 0.0;
                for (int d = 0; d < 3; ++d) {
                    const double t = (p[d] - brain_c[d]) / brain_sa[d];
                    bq += t * t;
                }
                if (bq > 1.0) continue;
                in_brain[i] = 1;
                double rq = 0.0;
                for (int d = 0; d < 3; ++d) {
                    const double t = (p[d] - tumor_c[d]) / tumor_q[d];
                    rq += t * t;
                }
                const double rho = std::sqrt(rq);
                if (rho <= r_core - rim_th) lab.data[i] = 1;
                else if (rho <= r_core) lab.data[i] = enhancing_free ? 1 : 4;
                else if (rho <= r_edema) lab.data[i] = 2;
            }

    // Intensities: tissue base + compartment contrast + a smooth field +
    // white noise, all inside the brain; outside stays exactly zero.
    for (int m = 0; m < kNumModalities; ++m) {
        SmoothField field(S, 0.08, rng);
        Volume& vol = c.modalities[m];
        vol.shape = {S, S, S};
        vol.spacing = cfg.spacing;
        vol.data.assign(lab.data.size(), 0.0f);
        i = 0;
        for (std::int64_t z = 0; z < S; ++z)
            for (std::int64_t y = 0; y < S; ++y)
                for (std::int64_t x = 0; x < S; ++x, ++i) {
                    const double noise = rng.normal(0.0, 0.05);
                    if (!in_brain[i]) continue;
                    double v = kTissueBase[m];
                    switch (lab.data[i]) {
                    case 1: v += kNecrosisDelta[m]; break;
                    case 2: v += kEdemaDelta[m]; break;
                    case 4: v += kEnhancingDelta[m]; break;
                    default: break;
                    }
                    v += field.at(static_cast<double>(z), static_cast<double>(y),
                                  static_cast<double>(x));
                    v += noise;
                    vol.data[i] = static_cast<float>(std::max(v, 0.05));
                }
    }
    c.label = std::move(lab);
    c.validate();
    return c;
}

} // namespace

std::vector<Case> synth_cohort(const SynthConfig& cfg) {
    if (cfg.n_cases < 0) throw ValueError("synth_cohort: negative case count");
    if (cfg.size < 16) throw ValueError("synth_cohort: size must be at least 16 per axis");
    if (!(cfg.no_enhancing_fraction >= 0.0 && cfg.no_enhancing_fraction <= 1.0))
        throw ValueError("synth_cohort: no_enhancing_fraction must lie in [0,1]");
    std::vector<Case> out;
    out.reserve(static_cast<std::size_t>(cfg.n_cases));
    for (std::int64_t i = 0; i < cfg.n_cases; ++i) out.push_back(synth_case(cfg, i));
    return out;
}

std::vector<Case> synth_cohort(std::int64_t n, std::int64_t size, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_cases = n;
    cfg.size = size;
    cfg.seed = seed;
    return synth_cohort(cfg);
}

} // namespace vseg
