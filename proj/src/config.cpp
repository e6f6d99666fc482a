#include "vseg/config.hpp"

#include <fstream>

#include "vseg/errors.hpp"
#include "vseg/textio.hpp"

namespace vseg {

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError(key + ": expected a boolean (0/1/true/false), got '" + v + "'");
}

int parse_i(const std::string& v, const std::string& key) {
    try {
        return static_cast<int>(parse_int(v, key));
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

std::int64_t parse_i64(const std::string& v, const std::string& key) {
    try {
        return parse_int(v, key);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

double parse_d(const std::string& v, const std::string& key) {
    try {
        return parse_double(v, key);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

std::string head_mode_name(HeadMode m) {
    return m == HeadMode::Softmax ? "softmax" : "sigmoid";
}

std::string loss_name(LossKind k) {
    switch (k) {
    case LossKind::Dice: return "dice";
    case LossKind::CrossEntropy: return "ce";
    case LossKind::DicePlusCe: return "dice+ce";
    }
    return "?";
}

} // namespace

KeyValues read_keyvalues(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                             line + "'");
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return kv;
}

void write_keyvalues(const KeyValues& kv, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    if (!out) throw ParseError(path + ": write failed");
}

void apply_setting(Settings& s, const std::string& key, const std::string& value) {
    ModelConfig& m = s.model;
    TrainConfig& t = s.train;
    AugmentConfig& a = s.train.augment;

    if (key == "model.in_channels") m.in_channels = parse_i(value, key);
    else if (key == "model.base_features") m.base_features = parse_i(value, key);
    else if (key == "model.depth") m.depth = parse_i(value, key);
    else if (key == "model.num_classes") m.num_classes = parse_i(value, key);
    else if (key == "model.num_regions") m.num_regions = parse_i(value, key);
    else if (key == "model.head_mode") {
        if (value == "softmax") m.head_mode = HeadMode::Softmax;
        else if (value == "sigmoid") m.head_mode = HeadMode::Sigmoid;
        else throw ConfigError(key + ": expected softmax or sigmoid, got '" + value + "'");
    } else if (key == "model.leakiness") m.leakiness = parse_d(value, key);
    else if (key == "model.num_heads") m.num_heads = parse_i(value, key);

    else if (key == "train.lr_init") t.lr_init = parse_d(value, key);
    else if (key == "train.lr_factor") t.lr_factor = parse_d(value, key);
    else if (key == "train.lr_patience_epochs") t.lr_patience_epochs = parse_i(value, key);
    else if (key == "train.stop_patience_epochs") t.stop_patience_epochs = parse_i(value, key);
    else if (key == "train.ema_alpha") t.ema_alpha = parse_d(value, key);
    else if (key == "train.weight_decay") t.weight_decay = parse_d(value, key);
    else if (key == "train.batches_per_epoch") t.batches_per_epoch = parse_i(value, key);
    else if (key == "train.max_epochs") t.max_epochs = parse_i(value, key);
    else if (key == "train.batch_size") t.batch_size = parse_i(value, key);
    else if (key == "train.patch_size") t.patch_size = parse_i64(value, key);
    else if (key == "train.loss") {
        if (value == "dice") t.loss.kind = LossKind::Dice;
        else if (value == "ce") t.loss.kind = LossKind::CrossEntropy;
        else if (value == "dice+ce") t.loss.kind = LossKind::DicePlusCe;
        else throw ConfigError(key + ": expected dice, ce, or dice+ce, got '" + value + "'");
    } else if (key == "train.class_set") {
        if (value == "foreground") t.loss.class_set = ClassSet::ForegroundOnly;
        else if (value == "all") t.loss.class_set = ClassSet::AllClasses;
        else throw ConfigError(key + ": expected foreground or all, got '" + value + "'");
    } else if (key == "train.smooth_eps") t.loss.smooth_eps = parse_d(value, key);
    else if (key == "train.full_volume_val") t.full_volume_val = parse_bool(value, key);
    else if (key == "train.workers") t.workers = parse_i(value, key);
    else if (key == "train.seed") t.seed = static_cast<std::uint64_t>(parse_i64(value, key));

    else if (key == "augment.rot_deg_z") a.rotation_max_deg[0] = parse_d(value, key);
    else if (key == "augment.rot_deg_y") a.rotation_max_deg[1] = parse_d(value, key);
    else if (key == "augment.rot_deg_x") a.rotation_max_deg[2] = parse_d(value, key);
    else if (key == "augment.scale_lo") a.scale_range[0] = parse_d(value, key);
    else if (key == "augment.scale_hi") a.scale_range[1] = parse_d(value, key);
    else if (key == "augment.elastic_grid") a.elastic_grid_spacing = parse_d(value, key);
    else if (key == "augment.elastic_sigma") a.elastic_sigma = parse_d(value, key);
    else if (key == "augment.gamma_lo") a.gamma_range[0] = parse_d(value, key);
    else if (key == "augment.gamma_hi") a.gamma_range[1] = parse_d(value, key);
    else if (key == "augment.mirror_z") a.mirror_axes[0] = parse_bool(value, key);
    else if (key == "augment.mirror_y") a.mirror_axes[1] = parse_bool(value, key);
    else if (key == "augment.mirror_x") a.mirror_axes[2] = parse_bool(value, key);
    else if (key == "augment.transform_prob") a.transform_prob = parse_d(value, key);
    else if (key == "augment.mirror_prob") a.mirror_prob = parse_d(value, key);

    else throw ConfigError("unknown setting '" + key + "'");
}

void apply_settings(Settings& s, const KeyValues& kv) {
    for (const auto& [k, v] : kv) apply_setting(s, k, v);
}

KeyValues settings_to_keyvalues(const Settings& s) {
    const ModelConfig& m = s.model;
    const TrainConfig& t = s.train;
    const AugmentConfig& a = s.train.augment;
    KeyValues kv;
    kv.emplace_back("model.in_channels", std::to_string(m.in_channels));
    kv.emplace_back("model.base_features", std::to_string(m.base_features));
    kv.emplace_back("model.depth", std::to_string(m.depth));
    kv.emplace_back("model.num_classes", std::to_string(m.num_classes));
    kv.emplace_back("model.num_regions", std::to_string(m.num_regions));
    kv.emplace_back("model.head_mode", head_mode_name(m.head_mode));
    kv.emplace_back("model.leakiness", fmt_double(m.leakiness));
    kv.emplace_back("model.num_heads", std::to_string(m.num_heads));

    kv.emplace_back("train.lr_init", fmt_double(t.lr_init));
    kv.emplace_back("train.lr_factor", fmt_double(t.lr_factor));
    kv.emplace_back("train.lr_patience_epochs", std::to_string(t.lr_patience_epochs));
    kv.emplace_back("train.stop_patience_epochs", std::to_string(t.stop_patience_epochs));
    kv.emplace_back("train.ema_alpha", fmt_double(t.ema_alpha));
    kv.emplace_back("train.weight_decay", fmt_double(t.weight_decay));
    kv.emplace_back("train.batches_per_epoch", std::to_string(t.batches_per_epoch));
    kv.emplace_back("train.max_epochs", std::to_string(t.max_epochs));
    kv.emplace_back("train.batch_size", std::to_string(t.batch_size));
    kv.emplace_back("train.patch_size", std::to_string(t.patch_size));
    kv.emplace_back("train.loss", loss_name(t.loss.kind));
    kv.emplace_back("train.class_set",
                    t.loss.class_set == ClassSet::ForegroundOnly ? "foreground" : "all");
    kv.emplace_back("train.smooth_eps", fmt_double(t.loss.smooth_eps));
    kv.emplace_back("train.full_volume_val", t.full_volume_val ? "1" : "0");
    kv.emplace_back("train.workers", std::to_string(t.workers));
    kv.emplace_back("train.seed", std::to_string(t.seed));

    kv.emplace_back("augment.rot_deg_z", fmt_double(a.rotation_max_deg[0]));
    kv.emplace_back("augment.rot_deg_y", fmt_double(a.rotation_max_deg[1]));
    kv.emplace_back("augment.rot_deg_x", fmt_double(a.rotation_max_deg[2]));
    kv.emplace_back("augment.scale_lo", fmt_double(a.scale_range[0]));
    kv.emplace_back("augment.scale_hi", fmt_double(a.scale_range[1]));
    kv.emplace_back("augment.elastic_grid", fmt_double(a.elastic_grid_spacing));
    kv.emplace_back("augment.elastic_sigma", fmt_double(a.elastic_sigma));
    kv.emplace_back("augment.gamma_lo", fmt_double(a.gamma_range[0]));
    kv.emplace_back("augment.gamma_hi", fmt_double(a.gamma_range[1]));
    kv.emplace_back("augment.mirror_z", a.mirror_axes[0] ? "1" : "0");
    kv.emplace_back("augment.mirror_y", a.mirror_axes[1] ? "1" : "0");
    kv.emplace_back("augment.mirror_x", a.mirror_axes[2] ? "1" : "0");
    kv.emplace_back("augment.transform_prob", fmt_double(a.transform_prob));
    kv.emplace_back("augment.mirror_prob", fmt_double(a.mirror_prob));
    return kv;
}

Settings read_settings(const std::string& path) {
    Settings s;
    apply_settings(s, read_keyvalues(path));
    return s;
}

void write_settings(const Settings& s, const std::string& path) {
    write_keyvalues(settings_to_keyvalues(s), path);
}

} // namespace vseg
