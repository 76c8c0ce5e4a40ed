#include "patchland/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "patchland/errors.hpp"
#include "patchland/rng.hpp"

namespace patchland::raster {

namespace {

void encode_u32le(std::uint32_t v, unsigned char* out) {
    out[0] = static_cast<unsigned char>(v & 0xFF);
    out[1] = static_cast<unsigned char>((v >> 8) & 0xFF);
    out[2] = static_cast<unsigned char>((v >> 16) & 0xFF);
    out[3] = static_cast<unsigned char>((v >> 24) & 0xFF);
}

std::uint32_t decode_u32le(const unsigned char* in) {
    return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
           (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

struct Header {
    std::string magic;
    int rows = 0, cols = 0, bands = 0;
    std::string dtype;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line))
        throw DataError("cannot read header line from " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed header in " + path.string() + ": " + e.what());
    }
    Header h;
    try {
        h.magic = j.at("magic").get<std::string>();
        h.rows = j.at("rows").get<int>();
        h.cols = j.at("cols").get<int>();
        h.bands = j.at("bands").get<int>();
        h.dtype = j.at("dtype").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("incomplete header in " + path.string() + ": " + e.what());
    }
    if (h.rows <= 0 || h.cols <= 0 || h.bands <= 0)
        throw DataError("non-positive dimensions in header of " + path.string());
    return h;
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t expected_bytes,
                                        const std::filesystem::path& path) {
    std::vector<unsigned char> buf(expected_bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(in.gcount()) != expected_bytes)
        throw DataError("payload shorter than header-declared size in " + path.string());
    if (in.peek() != std::ifstream::traits_type::eof())
        throw DataError("payload longer than header-declared size in " + path.string());
    return buf;
}

void write_header(std::ofstream& out, const char* magic, int rows, int cols, int bands,
                  const char* dtype) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "{\"magic\":\"%s\",\"rows\":%d,\"cols\":%d,\"bands\":%d,\"dtype\":\"%s\"}\n",
                  magic, rows, cols, bands, dtype);
    out << line;
}

}  // namespace

RasterCube load_cube(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open cube file " + path.string());
    const Header h = read_header(in, path);
    if (h.magic != "cube1") throw DataError("bad magic '" + h.magic + "' in " + path.string());
    if (h.dtype != "f32le") throw DataError("bad dtype '" + h.dtype + "' in " + path.string());

    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols * h.bands;
    const auto buf = read_payload(in, n * 4, path);

    RasterCube cube{h.rows, h.cols, h.bands, std::vector<float>(n)};
    for (std::size_t i = 0; i < n; ++i)
        cube.values[i] = std::bit_cast<float>(decode_u32le(buf.data() + i * 4));
    for (float v : cube.values)
        if (!std::isfinite(v)) throw DataError("non-finite value in " + path.string());
    return cube;
}

void write_cube(const std::filesystem::path& path, const RasterCube& cube) {
    if (cube.values.size() != static_cast<std::size_t>(cube.rows) * cube.cols * cube.bands)
        throw DataError("cube value count does not match dimensions");
    for (float v : cube.values)
        if (!std::isfinite(v)) throw DataError("refusing to write non-finite cube value");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    write_header(out, "cube1", cube.rows, cube.cols, cube.bands, "f32le");
    std::vector<unsigned char> buf(cube.values.size() * 4);
    for (std::size_t i = 0; i < cube.values.size(); ++i)
        encode_u32le(std::bit_cast<std::uint32_t>(cube.values[i]), buf.data() + i * 4);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

LabelMap load_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open label file " + path.string());
    const Header h = read_header(in, path);
    if (h.magic != "lbl1") throw DataError("bad magic '" + h.magic + "' in " + path.string());
    if (h.dtype != "u16le") throw DataError("bad dtype '" + h.dtype + "' in " + path.string());
    if (h.bands != 1) throw DataError("label map must have bands=1 in " + path.string());

    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols;
    const auto buf = read_payload(in, n * 2, path);

    LabelMap map{h.rows, h.cols, std::vector<std::uint16_t>(n)};
    for (std::size_t i = 0; i < n; ++i)
        map.labels[i] = static_cast<std::uint16_t>(buf[i * 2] | (buf[i * 2 + 1] << 8));
    return map;
}

void write_labels(const std::filesystem::path& path, const LabelMap& map) {
    if (map.labels.size() != static_cast<std::size_t>(map.rows) * map.cols)
        throw DataError("label count does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    write_header(out, "lbl1", map.rows, map.cols, 1, "u16le");
    std::vector<unsigned char> buf(map.labels.size() * 2);
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        buf[i * 2] = static_cast<unsigned char>(map.labels[i] & 0xFF);
        buf[i * 2 + 1] = static_cast<unsigned char>(map.labels[i] >> 8);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

RasterCube exclude_bands(const RasterCube& cube, const std::vector<BandRange>& drop) {
    std::vector<bool> dropped(static_cast<std::size_t>(cube.bands), false);
    for (const auto& r : drop) {
        if (r.first < 1 || r.last > cube.bands || r.first > r.last)
            throw ConfigError("band range [" + std::to_string(r.first) + "," + std::to_string(r.last) +
                              "] out of bounds for " + std::to_string(cube.bands) + " bands");
        for (int b = r.first; b <= r.last; ++b) {
            if (dropped[b - 1])
                throw ConfigError("band " + std::to_string(b) + " appears in overlapping drop ranges");
            dropped[b - 1] = true;
        }
    }
    std::vector<int> keep;
    for (int b = 0; b < cube.bands; ++b)
        if (!dropped[b]) keep.push_back(b);
    if (keep.empty()) throw ConfigError("band exclusion would drop all bands");

    RasterCube out{cube.rows, cube.cols, static_cast<int>(keep.size()), {}};
    out.values.resize(static_cast<std::size_t>(out.rows) * out.cols * out.bands);
    const std::size_t pixels = static_cast<std::size_t>(cube.rows) * cube.cols;
    for (std::size_t px = 0; px < pixels; ++px) {
        const float* src = cube.values.data() + px * cube.bands;
        float* dst = out.values.data() + px * out.bands;
        for (std::size_t k = 0; k < keep.size(); ++k) dst[k] = src[keep[k]];
    }
    return out;
}

NormalizationStats compute_stats(const RasterCube& cube, const LabelMap& labels) {
    if (labels.rows != cube.rows || labels.cols != cube.cols)
        throw DataError("label map dimensions do not match cube");
    NormalizationStats stats;
    stats.min.assign(cube.bands, std::numeric_limits<float>::max());
    stats.max.assign(cube.bands, std::numeric_limits<float>::lowest());
    bool any = false;
    for (int r = 0; r < cube.rows; ++r) {
        for (int c = 0; c < cube.cols; ++c) {
            if (labels.at(r, c) == 0) continue;
            any = true;
            for (int b = 0; b < cube.bands; ++b) {
                const float v = cube.at(r, c, b);
                stats.min[b] = std::min(stats.min[b], v);
                stats.max[b] = std::max(stats.max[b], v);
            }
        }
    }
    if (!any) throw DataError("no labeled pixels to compute normalization stats from");
    return stats;
}

namespace {

inline float normalize_value(float v, float lo, float hi) {
    if (!(hi > lo)) return 0.0f;  // constant band
    const float t = (v - lo) / (hi - lo);
    return std::clamp(t, 0.0f, 1.0f);
}

}  // namespace

RasterCube normalize(const RasterCube& cube, const NormalizationStats& stats) {
    if (stats.bands() != cube.bands)
        throw DataError("normalization stats band count does not match cube");
    RasterCube out = cube;
    const std::size_t pixels = static_cast<std::size_t>(cube.rows) * cube.cols;
    for (std::size_t px = 0; px < pixels; ++px)
        for (int b = 0; b < cube.bands; ++b)
            out.values[px * cube.bands + b] =
                normalize_value(cube.values[px * cube.bands + b], stats.min[b], stats.max[b]);
    return out;
}

void normalize_patches(PatchDataset& ds, const NormalizationStats& stats) {
    if (stats.bands() != ds.bands)
        throw DataError("normalization stats band count does not match dataset");
    for (auto& patch : ds.patches) {
        const std::size_t cells = patch.values.size() / ds.bands;
        for (std::size_t i = 0; i < cells; ++i)
            for (int b = 0; b < ds.bands; ++b)
                patch.values[i * ds.bands + b] =
                    normalize_value(patch.values[i * ds.bands + b], stats.min[b], stats.max[b]);
    }
}

int mirror_index(int i, int n) {
    // Symmetric reflection with edge repeat: -1 -> 0, n -> n-1, ...
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

std::vector<float> window_values(const RasterCube& cube, int r, int c, int p) {
    const int h = (p - 1) / 2;
    std::vector<float> out(static_cast<std::size_t>(p) * p * cube.bands);
    std::size_t k = 0;
    for (int dr = -h; dr <= h; ++dr) {
        const int rr = mirror_index(r + dr, cube.rows);
        for (int dc = -h; dc <= h; ++dc) {
            const int cc = mirror_index(c + dc, cube.cols);
            const float* src = cube.values.data() + (static_cast<std::size_t>(rr) * cube.cols + cc) * cube.bands;
            for (int b = 0; b < cube.bands; ++b) out[k++] = src[b];
        }
    }
    return out;
}

PatchDataset extract_patches(const RasterCube& cube, const LabelMap& labels, const PatchSpec& spec) {
    if (labels.rows != cube.rows || labels.cols != cube.cols)
        throw DataError("label map dimensions do not match cube");
    if (spec.p <= 0 || spec.p % 2 == 0)
        throw ConfigError("patch size must be odd and positive, got " + std::to_string(spec.p));

    const int h = (spec.p - 1) / 2;
    PatchDataset ds;
    ds.p = spec.p;
    ds.bands = cube.bands;

    std::set<int> ids;
    for (int r = 0; r < cube.rows; ++r) {
        for (int c = 0; c < cube.cols; ++c) {
            const int label = labels.at(r, c);
            if (label == 0) continue;
            if (spec.border == BorderPolicy::skip &&
                (r < h || c < h || r >= cube.rows - h || c >= cube.cols - h))
                continue;
            Patch patch;
            patch.p = spec.p;
            patch.bands = cube.bands;
            patch.center_label = label;
            patch.values = window_values(cube, r, c, spec.p);
            ds.patches.push_back(std::move(patch));
            ds.source_coords.emplace_back(r, c);
            ids.insert(label);
        }
    }
    if (ds.patches.empty()) throw DataError("zero patches extracted");
    ds.class_ids.assign(ids.begin(), ids.end());
    return ds;
}

std::vector<float> flatten_patch(const Patch& patch) {
    return patch.values;  // storage layout is already [row][col][band]
}

std::pair<PatchDataset, PatchDataset> split_dataset(const PatchDataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must lie strictly between 0 and 1");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.patches.size(); ++i)
        by_class[ds.patches[i].center_label].push_back(i);

    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw DataError("class " + std::to_string(label) + " has fewer than 2 samples");
        Rng rng(derive_seed(seed, {0x53504C49ULL, static_cast<std::uint64_t>(label)}));
        rng.shuffle(idx);
        std::size_t n_train =
            static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size())));
        n_train = std::max<std::size_t>(n_train, 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto take = [&ds](const std::vector<std::size_t>& idx) {
        PatchDataset out;
        out.p = ds.p;
        out.bands = ds.bands;
        out.class_ids = ds.class_ids;
        out.patches.reserve(idx.size());
        out.source_coords.reserve(idx.size());
        for (std::size_t i : idx) {
            out.patches.push_back(ds.patches[i]);
            out.source_coords.push_back(ds.source_coords[i]);
        }
        return out;
    };
    return {take(train_idx), take(test_idx)};
}

}  // namespace patchland::raster
