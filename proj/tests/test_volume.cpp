#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vseg/errors.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

using namespace vseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    const fs::path p = fs::temp_directory_path() / (std::string("vseg_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Volume random_volume(std::array<std::int64_t, 3> shape, std::array<double, 3> spacing,
                     std::uint64_t seed) {
    Volume v;
    v.shape = shape;
    v.spacing = spacing;
    v.data.resize(static_cast<std::size_t>(v.voxels()));
    Rng rng(seed);
    for (auto& x : v.data) x = static_cast<float>(rng.normal(0.0, 3.0));
    return v;
}

Case random_case(const std::string& id, std::array<std::int64_t, 3> shape, std::uint64_t seed) {
    Case c;
    c.id = id;
    c.dataset_tag = 0;
    for (int m = 0; m < kNumModalities; ++m)
        c.modalities[m] = random_volume(shape, {1.0, 1.25, 0.75}, seed + m);
    LabelVolume lab;
    lab.shape = shape;
    lab.spacing = {1.0, 1.25, 0.75};
    lab.data.resize(static_cast<std::size_t>(lab.voxels()));
    Rng rng(seed + 99);
    const std::uint8_t values[4] = {0, 1, 2, 4};
    for (auto& x : lab.data) x = values[rng.uniform_int(0, 3)];
    c.label = lab;
    return c;
}

} // namespace

TEST_CASE("volume IO round-trips bit-for-bit") {
    const auto dir = temp_dir("volio");
    const Volume v = random_volume({3, 4, 5}, {1.0, 0.5, 2.25}, 7);
    const auto path = (dir / "v.vseg").string();
    write_volume(v, path);
    const Volume r = read_volume(path);
    CHECK(r.shape == v.shape);
    CHECK(r.spacing == v.spacing);
    REQUIRE(r.data.size() == v.data.size());
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * sizeof(float)) == 0);
}

TEST_CASE("label IO round-trips and rejects out-of-set values") {
    const auto dir = temp_dir("labio");
    LabelVolume l;
    l.shape = {2, 3, 2};
    l.spacing = {1, 1, 1};
    l.data = {0, 1, 2, 4, 4, 0, 1, 1, 2, 0, 0, 4};
    const auto path = (dir / "l.vseg").string();
    write_labels(l, path);
    const LabelVolume r = read_labels(path);
    CHECK(r.data == l.data);
    CHECK(r.spacing == l.spacing);

    l.data[3] = 3;
    CHECK_THROWS_AS(write_labels(l, path), ValueError);
}

TEST_CASE("truncated payload is reported with byte counts") {
    const auto dir = temp_dir("trunc");
    const auto path = (dir / "t.vseg").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "VSEG1 f32 10 10 10 1 1 1\n";
        std::vector<float> payload(999, 1.0f); // one voxel short
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("truncated"), ParseError);
}

TEST_CASE("trailing bytes after the payload are rejected") {
    const auto dir = temp_dir("trail");
    const auto path = (dir / "t.vseg").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "VSEG1 f32 2 2 2 1 1 1\n";
        std::vector<float> payload(9, 1.0f); // one voxel too many
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("trailing"), ParseError);
}

TEST_CASE("malformed headers are rejected with the file named") {
    const auto dir = temp_dir("hdr");
    auto write_file = [&](const std::string& header) {
        const auto path = (dir / "h.vseg").string();
        std::ofstream out(path, std::ios::binary);
        out << header;
        return path;
    };
    CHECK_THROWS_AS(read_volume(write_file("WRONG f32 2 2 2 1 1 1\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 i16 2 2 2 1 1 1\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 f32 2 2 1 1 1\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 f32 2 2 2 1 1 1 9\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 f32 2 -2 2 1 1 1\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 f32 2 2 2 1 0 1\n")), ParseError);
    CHECK_THROWS_AS(read_volume(write_file("VSEG1 f32 2 2 2 1 x 1\n")), ParseError);
    // dtype mismatch against the reader used
    const auto upath = (dir / "u.vseg").string();
    {
        std::ofstream out(upath, std::ios::binary);
        out << "VSEG1 u8 1 1 1 1 1 1\n";
        out.put('\2');
    }
    CHECK_THROWS_WITH_AS(read_volume(upath), doctest::Contains("f32"), ParseError);
}

TEST_CASE("store_case / load_case round-trips a labeled case") {
    const auto dir = temp_dir("case");
    const Case c = random_case("trip01", {4, 5, 6}, 21);
    const CaseDescriptor d = store_case(c, dir.string());
    CHECK(d.id == "trip01");
    const Case r = load_case(d);
    CHECK(r.id == c.id);
    CHECK(r.dataset_tag == c.dataset_tag);
    for (int m = 0; m < kNumModalities; ++m) CHECK(r.modalities[m].data == c.modalities[m].data);
    REQUIRE(r.label.has_value());
    CHECK(r.label->data == c.label->data);
}

TEST_CASE("manifest round-trips and resolves relative paths") {
    const auto dir = temp_dir("manifest");
    const Case c0 = random_case("alpha", {3, 3, 3}, 1);
    Case c1 = random_case("beta", {3, 3, 3}, 2);
    c1.label.reset(); // unlabeled entry exercises the 6-field row
    c1.dataset_tag = 1;
    std::vector<CaseDescriptor> descs{store_case(c0, (dir / "data").string()),
                                      store_case(c1, (dir / "data").string())};
    const auto mpath = (dir / "cohort.tsv").string();
    write_manifest(descs, mpath);

    const auto back = read_manifest(mpath);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "alpha");
    CHECK(back[1].id == "beta");
    CHECK(back[1].dataset_tag == 1);
    CHECK(back[1].label_path.empty());
    // paths in the file are relative; read_manifest resolves them so the
    // cases load regardless of the working directory
    const Case r = load_case(back[0]);
    CHECK(r.modalities[2].data == c0.modalities[2].data);
}

TEST_CASE("manifest parsing: comments, blank lines, field-count errors") {
    const auto dir = temp_dir("manparse");
    const auto mpath = (dir / "m.tsv").string();
    {
        std::ofstream out(mpath);
        out << "# a comment line\n";
        out << "\n";
        out << "id1\t0\ta\tb\tc\td\tseg\t# trailing comment\n";
    }
    // comment strips mid-line, leaving exactly 7 fields
    auto rows = read_manifest(mpath);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].id == "id1");
    CHECK(!rows[0].label_path.empty());

    {
        std::ofstream out(mpath);
        out << "id1\t0\ta\tb\tc\n";
    }
    CHECK_THROWS_WITH_AS(read_manifest(mpath), doctest::Contains("6 or 7"), ParseError);
}

TEST_CASE("load_case names the case when a modality is not co-registered") {
    const auto dir = temp_dir("coreg");
    const Case c = random_case("lopsided", {4, 4, 4}, 5);
    CaseDescriptor d = store_case(c, dir.string());
    // overwrite the T2 volume with a different shape
    write_volume(random_volume({4, 4, 5}, {1.0, 1.25, 0.75}, 9), d.modality_paths[2]);
    CHECK_THROWS_WITH_AS(load_case(d), doctest::Contains("lopsided"), ParseError);
}

TEST_CASE("spacing survives IO exactly and validation guards degenerate fields") {
    const auto dir = temp_dir("spacing");
    Volume v = random_volume({2, 2, 2}, {0.9765625, 1.0, 3.141592653589793}, 3);
    const auto path = (dir / "s.vseg").string();
    write_volume(v, path);
    const Volume r = read_volume(path);
    CHECK(r.spacing[0] == v.spacing[0]);
    CHECK(r.spacing[2] == v.spacing[2]);

    v.spacing[1] = 0.0;
    CHECK_THROWS_AS(write_volume(v, path), ValueError);
    v.spacing[1] = 1.0;
    v.data.pop_back();
    CHECK_THROWS_AS(write_volume(v, path), ValueError);
}
