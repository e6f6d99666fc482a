#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "vseg/config.hpp"
#include "vseg/errors.hpp"

using namespace vseg;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const char* tag) {
    const fs::path p = fs::temp_directory_path() / (std::string("vseg_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("keyvalues: file round trip with comments and blank lines") {
    const auto dir = temp_dir("kv");
    const std::string path = (dir / "a.txt").string();
    std::ofstream(path) << "# a comment\n"
                           "alpha=1\n"
                           "\n"
                           "beta=two words # trailing comment\n"
                           "gamma=\n";
    const KeyValues kv = read_keyvalues(path);
    REQUIRE(kv.size() == 3);
    CHECK(kv[0] == KeyValue{"alpha", "1"});
    CHECK(kv[1] == KeyValue{"beta", "two words"});
    CHECK(kv[2] == KeyValue{"gamma", ""});

    const std::string out = (dir / "b.txt").string();
    write_keyvalues(kv, out);
    CHECK(read_keyvalues(out) == kv);
}

TEST_CASE("keyvalues: malformed lines are rejected with the line number") {
    const auto dir = temp_dir("kvbad");
    const std::string path = (dir / "a.txt").string();
    std::ofstream(path) << "good=1\nnot a pair\n";
    CHECK_THROWS_WITH_AS(read_keyvalues(path), doctest::Contains(":2:"), ParseError);
    CHECK_THROWS_AS(read_keyvalues((dir / "missing.txt").string()), ParseError);

    std::ofstream((dir / "b.txt")) << "=value\n";
    CHECK_THROWS_AS(read_keyvalues((dir / "b.txt").string()), ParseError);
}

TEST_CASE("settings: every serialized key applies back to an equal bundle") {
    Settings s;
    s.model.num_classes = 0;
    s.model.num_regions = 3;
    s.model.head_mode = HeadMode::Sigmoid;
    s.model.base_features = 8;
    s.model.depth = 4;
    s.model.num_heads = 2;
    s.model.leakiness = 0.05;
    s.train.lr_init = 3e-4;
    s.train.loss.kind = LossKind::DicePlusCe;
    s.train.loss.class_set = ClassSet::AllClasses;
    s.train.full_volume_val = true;
    s.train.workers = 3;
    s.train.seed = 99;
    s.train.patch_size = 64;
    s.train.augment.rotation_max_deg = {5.0, 10.0, 20.0};
    s.train.augment.scale_range = {0.9, 1.1};
    s.train.augment.mirror_axes = {false, true, false};
    s.train.augment.transform_prob = 0.33;

    Settings t; // different defaults everywhere
    apply_settings(t, settings_to_keyvalues(s));

    CHECK(settings_to_keyvalues(t) == settings_to_keyvalues(s));
    CHECK(t.model.head_mode == HeadMode::Sigmoid);
    CHECK(t.model.num_regions == 3);
    CHECK(t.train.loss.kind == LossKind::DicePlusCe);
    CHECK(t.train.loss.class_set == ClassSet::AllClasses);
    CHECK(t.train.augment.rotation_max_deg == std::array<double, 3>{5.0, 10.0, 20.0});
    CHECK(t.train.augment.mirror_axes == std::array<bool, 3>{false, true, false});
    CHECK(t.train.patch_size == 64);

    const auto dir = temp_dir("settings");
    const std::string path = (dir / "s.txt").string();
    write_settings(s, path);
    const Settings u = read_settings(path);
    CHECK(settings_to_keyvalues(u) == settings_to_keyvalues(s));
}

TEST_CASE("settings: unknown keys and bad values are configuration errors") {
    Settings s;
    CHECK_THROWS_WITH_AS(apply_setting(s, "model.depht", "4"),
                         doctest::Contains("unknown setting 'model.depht'"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "model.depth", "four"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "model.head_mode", "argmax"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "train.loss", "l2"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "train.full_volume_val", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "augment.mirror_z", "2"), ConfigError);

    // values that parse but violate the contract surface via validate()
    apply_setting(s, "train.lr_factor", "0.5");
    CHECK_THROWS_AS(s.train.validate(), ConfigError);
}
