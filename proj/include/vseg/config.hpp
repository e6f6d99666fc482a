#pragma once

// Flat key=value settings files. One "key=value" per line, '#' starts a
// comment, blank lines allowed. Typed accessors cover the model/training
// bundle the command-line tools need; unknown keys are errors so typos
// cannot silently fall back to defaults.

#include <string>
#include <utility>
#include <vector>

#include "vseg/layers.hpp"
#include "vseg/trainer.hpp"

namespace vseg {

using KeyValue = std::pair<std::string, std::string>;
using KeyValues = std::vector<KeyValue>;

KeyValues read_keyvalues(const std::string& path); // ParseError on malformed lines
void write_keyvalues(const KeyValues& kv, const std::string& path);

// Everything a training or prediction run is parameterized by.
struct Settings {
    ModelConfig model;
    TrainConfig train;
};

// Applies one namespaced key ("model.depth", "train.lr_init",
// "augment.scale_lo", ...). Unknown keys and unparsable values throw
// ConfigError.
void apply_setting(Settings& s, const std::string& key, const std::string& value);
void apply_settings(Settings& s, const KeyValues& kv);

// Full round trip: every key apply_setting understands, in a fixed order,
// with the current values.
KeyValues settings_to_keyvalues(const Settings& s);

Settings read_settings(const std::string& path);
void write_settings(const Settings& s, const std::string& path);

} // namespace vseg
