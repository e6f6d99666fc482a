#include "vseg/volume.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vseg/textio.hpp"

static_assert(std::endian::native == std::endian::little,
              "volume payloads are little-endian raw bytes");

namespace vseg {

namespace fs = std::filesystem;

void Volume::validate(const std::string& what) const {
    for (int d = 0; d < 3; ++d) {
        if (shape[d] < 1) throw ValueError(what + ": non-positive dimension");
        if (!(spacing[d] > 0.0)) throw ValueError(what + ": spacing must be strictly positive");
    }
    if (static_cast<std::int64_t>(data.size()) != voxels())
        throw ValueError(what + ": data length does not match shape");
}

void LabelVolume::validate(const std::string& what) const {
    for (int d = 0; d < 3; ++d) {
        if (shape[d] < 1) throw ValueError(what + ": non-positive dimension");
        if (!(spacing[d] > 0.0)) throw ValueError(what + ": spacing must be strictly positive");
    }
    if (static_cast<std::int64_t>(data.size()) != voxels())
        throw ValueError(what + ": data length does not match shape");
    for (auto v : data)
        if (v != 0 && v != 1 && v != 2 && v != 4)
            throw ValueError(what + ": label value " + std::to_string(int(v)) + " outside {0,1,2,4}");
}

const char* modality_name(int i) {
    static const char* names[kNumModalities] = {"t1", "t1ce", "t2", "flair"};
    if (i < 0 || i >= kNumModalities) throw IndexError("modality index out of range");
    return names[i];
}

void Case::validate() const {
    const auto& ref = modalities[0];
    for (int m = 1; m < kNumModalities; ++m) {
        if (modalities[m].shape != ref.shape || modalities[m].spacing != ref.spacing)
            throw ParseError("case " + id + ": modality " + modality_name(m) +
                             " is not co-registered with " + modality_name(0));
    }
    for (int m = 0; m < kNumModalities; ++m) modalities[m].validate("case " + id + " " + modality_name(m));
    if (label) {
        if (label->shape != ref.shape || label->spacing != ref.spacing)
            throw ParseError("case " + id + ": label volume is not co-registered with the modalities");
        label->validate("case " + id + " label");
    }
}

// ---------------------------------------------------------------------------
// container format
// ---------------------------------------------------------------------------

namespace {

struct Header {
    std::string dtype;
    std::array<std::int64_t, 3> shape;
    std::array<double, 3> spacing;
};

void write_header(std::ofstream& out, const char* dtype, const std::array<std::int64_t, 3>& shape,
                  const std::array<double, 3>& spacing) {
    out << "VSEG1 " << dtype << ' ' << shape[0] << ' ' << shape[1] << ' ' << shape[2] << ' '
        << fmt_double(spacing[0]) << ' ' << fmt_double(spacing[1]) << ' ' << fmt_double(spacing[2]) << '\n';
}

Header read_header(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing header line");
    std::istringstream ls(line);
    std::string magic, dtype;
    std::array<std::string, 3> dims, sp;
    if (!(ls >> magic >> dtype >> dims[0] >> dims[1] >> dims[2] >> sp[0] >> sp[1] >> sp[2]))
        throw ParseError(path + ": malformed header '" + line + "'");
    std::string extra;
    if (ls >> extra) throw ParseError(path + ": trailing header field '" + extra + "'");
    if (magic != "VSEG1") throw ParseError(path + ": bad magic '" + magic + "'");
    if (dtype != "f32" && dtype != "u8") throw ParseError(path + ": unknown dtype '" + dtype + "'");
    Header h;
    h.dtype = dtype;
    for (int d = 0; d < 3; ++d) {
        h.shape[d] = parse_int(dims[d], path + " header dim");
        if (h.shape[d] < 1) throw ParseError(path + ": non-positive dimension in header");
        h.spacing[d] = parse_double(sp[d], path + " header spacing");
        if (!(h.spacing[d] > 0.0)) throw ParseError(path + ": non-positive spacing in header");
    }
    return h;
}

void read_payload(std::ifstream& in, const std::string& path, char* dst, std::size_t bytes) {
    in.read(dst, static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw ParseError(path + ": truncated payload (" + std::to_string(in.gcount()) + " of " +
                         std::to_string(bytes) + " bytes)");
    if (in.peek() != std::ifstream::traits_type::eof())
        throw ParseError(path + ": trailing bytes after payload");
}

} // namespace

void write_volume(const Volume& v, const std::string& path) {
    v.validate(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    write_header(out, "f32", v.shape, v.spacing);
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    if (!out) throw ParseError(path + ": write failed");
}

Volume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    const Header h = read_header(in, path);
    if (h.dtype != "f32") throw ParseError(path + ": expected dtype f32, found " + h.dtype);
    Volume v;
    v.shape = h.shape;
    v.spacing = h.spacing;
    v.data.resize(static_cast<std::size_t>(v.voxels()));
    read_payload(in, path, reinterpret_cast<char*>(v.data.data()), v.data.size() * sizeof(float));
    return v;
}

void write_labels(const LabelVolume& v, const std::string& path) {
    v.validate(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    write_header(out, "u8", v.shape, v.spacing);
    out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (!out) throw ParseError(path + ": write failed");
}

LabelVolume read_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    const Header h = read_header(in, path);
    if (h.dtype != "u8") throw ParseError(path + ": expected dtype u8, found " + h.dtype);
    LabelVolume v;
    v.shape = h.shape;
    v.spacing = h.spacing;
    v.data.resize(static_cast<std::size_t>(v.voxels()));
    read_payload(in, path, reinterpret_cast<char*>(v.data.data()), v.data.size());
    v.validate(path);
    return v;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string resolve_path(const std::string& p, const fs::path& base_dir) {
    fs::path fp(p);
    if (fp.is_absolute()) return p;
    return (base_dir / fp).string();
}

} // namespace

std::vector<CaseDescriptor> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    const fs::path base = fs::path(path).parent_path();
    std::vector<CaseDescriptor> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        // a line of pure whitespace is blank
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = split_tabs(line);
        while (!fields.empty() && fields.back().empty()) fields.pop_back();
        if (fields.size() != 6 && fields.size() != 7)
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected 6 or 7 tab-separated fields, got " + std::to_string(fields.size()));
        CaseDescriptor d;
        d.id = fields[0];
        if (d.id.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": empty case id");
        d.dataset_tag = static_cast<int>(parse_int(fields[1], path + ":" + std::to_string(lineno) + " dataset_tag"));
        if (d.dataset_tag < 0) throw ParseError(path + ":" + std::to_string(lineno) + ": negative dataset_tag");
        for (int m = 0; m < kNumModalities; ++m) d.modality_paths[m] = resolve_path(fields[2 + m], base);
        if (fields.size() == 7) d.label_path = resolve_path(fields[6], base);
        out.push_back(std::move(d));
    }
    return out;
}

void write_manifest(const std::vector<CaseDescriptor>& cases, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    auto relativize = [&base](const std::string& p) {
        std::error_code ec;
        const fs::path rel = fs::relative(fs::absolute(p), base, ec);
        return (ec || rel.empty()) ? p : rel.string();
    };
    out << "# id\tdataset_tag\tt1\tt1ce\tt2\tflair\t[seg]\n";
    for (const auto& d : cases) {
        out << d.id << '\t' << d.dataset_tag;
        for (const auto& p : d.modality_paths) out << '\t' << relativize(p);
        if (!d.label_path.empty()) out << '\t' << relativize(d.label_path);
        out << '\n';
    }
    if (!out) throw ParseError(path + ": write failed");
}

Case load_case(const CaseDescriptor& d) {
    Case c;
    c.id = d.id;
    c.dataset_tag = d.dataset_tag;
    for (int m = 0; m < kNumModalities; ++m) c.modalities[m] = read_volume(d.modality_paths[m]);
    if (!d.label_path.empty()) c.label = read_labels(d.label_path);
    c.validate();
    return c;
}

CaseDescriptor store_case(const Case& c, const std::string& dir) {
    c.validate();
    fs::create_directories(dir);
    CaseDescriptor d;
    d.id = c.id;
    d.dataset_tag = c.dataset_tag;
    for (int m = 0; m < kNumModalities; ++m) {
        d.modality_paths[m] = (fs::path(dir) / (c.id + "_" + modality_name(m) + ".vseg")).string();
        write_volume(c.modalities[m], d.modality_paths[m]);
    }
    if (c.label) {
        d.label_path = (fs::path(dir) / (c.id + "_seg.vseg")).string();
        write_labels(*c.label, d.label_path);
    }
    return d;
}

} // namespace vseg
