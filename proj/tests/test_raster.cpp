#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "patchland/errors.hpp"
#include "patchland/raster.hpp"
#include "patchland/rng.hpp"
#include "oracles.hpp"

using namespace patchland;
using raster::BorderPolicy;
using raster::LabelMap;
using raster::RasterCube;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("patchland_test_" + name);
}

RasterCube random_cube(Rng& rng, int rows, int cols, int bands) {
    RasterCube cube{rows, cols, bands, {}};
    cube.values.resize(static_cast<std::size_t>(rows) * cols * bands);
    for (auto& v : cube.values) v = static_cast<float>(rng.uniform(-5.0, 20.0));
    return cube;
}

LabelMap random_labels(Rng& rng, int rows, int cols, int max_class, double labeled_rate) {
    LabelMap map{rows, cols, {}};
    map.labels.resize(static_cast<std::size_t>(rows) * cols, 0);
    for (auto& l : map.labels)
        if (rng.unit() < labeled_rate)
            l = static_cast<std::uint16_t>(1 + rng.below(max_class));
    return map;
}

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cube file decodes header-declared layout") {
    RasterCube cube{2, 2, 1, {1.f, 2.f, 3.f, 4.f}};
    const auto path = temp_file("decode.cube1");
    raster::write_cube(path, cube);
    const auto loaded = raster::load_cube(path);
    CHECK(loaded.rows == 2);
    CHECK(loaded.cols == 2);
    CHECK(loaded.bands == 1);
    CHECK(loaded.at(1, 1, 0) == 4.0f);
    std::filesystem::remove(path);
}

TEST_CASE("cube payload length mismatch is rejected") {
    const auto path = temp_file("short.cube1");
    {
        std::ofstream out(path, std::ios::binary);
        out << "{\"magic\":\"cube1\",\"rows\":2,\"cols\":2,\"bands\":1,\"dtype\":\"f32le\"}\n";
        const float vals[3] = {1.f, 2.f, 3.f};  // header promises 4
        out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    CHECK_THROWS_AS(raster::load_cube(path), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("cube writer then loader is byte-identical on random cubes") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 1 + static_cast<int>(rng.below(6));
        const int cols = 1 + static_cast<int>(rng.below(6));
        const int bands = 1 + static_cast<int>(rng.below(4));
        const auto cube = random_cube(rng, rows, cols, bands);
        const auto p1 = temp_file("rt1.cube1");
        const auto p2 = temp_file("rt2.cube1");
        raster::write_cube(p1, cube);
        raster::write_cube(p2, raster::load_cube(p1));
        CHECK(slurp(p1) == slurp(p2));
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }
}

TEST_CASE("cube loader rejects malformed and non-finite input") {
    const auto path = temp_file("bad.cube1");
    {
        std::ofstream out(path, std::ios::binary);
        out << "not json\n";
    }
    CHECK_THROWS_AS(raster::load_cube(path), DataError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "{\"magic\":\"cube1\",\"rows\":1,\"cols\":1,\"bands\":1,\"dtype\":\"f32le\"}\n";
        const float nan = std::numeric_limits<float>::quiet_NaN();
        out.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
    }
    CHECK_THROWS_AS(raster::load_cube(path), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("label map round-trips") {
    Rng rng(12);
    LabelMap map = random_labels(rng, 5, 7, 13, 0.6);
    const auto path = temp_file("labels.lbl1");
    raster::write_labels(path, map);
    const auto loaded = raster::load_labels(path);
    CHECK(loaded.rows == map.rows);
    CHECK(loaded.cols == map.cols);
    CHECK(loaded.labels == map.labels);
    std::filesystem::remove(path);
}

TEST_CASE("exclude_bands drops the documented AVIRIS-NG ranges") {
    Rng rng(13);
    const auto cube = random_cube(rng, 2, 2, 425);
    const auto out = raster::exclude_bands(cube, {{1, 5}, {196, 207}, {285, 320}});
    CHECK(out.bands == 372);
}

TEST_CASE("exclude_bands with empty drop list is the identity") {
    Rng rng(14);
    const auto cube = random_cube(rng, 3, 2, 10);
    const auto out = raster::exclude_bands(cube, {});
    CHECK(out.values == cube.values);
    CHECK(out.bands == cube.bands);
}

TEST_CASE("exclude_bands keeps surviving bands in order") {
    Rng rng(15);
    const auto cube = random_cube(rng, 2, 3, 10);
    const auto out = raster::exclude_bands(cube, {{2, 3}});
    // surviving original indices (0-based): 0, 3, 4, ..., 9
    const std::vector<int> keep = {0, 3, 4, 5, 6, 7, 8, 9};
    REQUIRE(out.bands == static_cast<int>(keep.size()));
    for (int r = 0; r < cube.rows; ++r)
        for (int c = 0; c < cube.cols; ++c)
            for (std::size_t k = 0; k < keep.size(); ++k)
                CHECK(out.at(r, c, static_cast<int>(k)) == cube.at(r, c, keep[k]));
}

TEST_CASE("exclude_bands rejects bad ranges") {
    Rng rng(16);
    const auto cube = random_cube(rng, 2, 2, 10);
    CHECK_THROWS_AS(raster::exclude_bands(cube, {{0, 3}}), ConfigError);
    CHECK_THROWS_AS(raster::exclude_bands(cube, {{8, 11}}), ConfigError);
    CHECK_THROWS_AS(raster::exclude_bands(cube, {{1, 5}, {4, 6}}), ConfigError);
    CHECK_THROWS_AS(raster::exclude_bands(cube, {{1, 10}}), ConfigError);
}

TEST_CASE("exclude_bands composes over disjoint range sets") {
    Rng rng(17);
    const auto cube = random_cube(rng, 2, 2, 24);
    const std::vector<raster::BandRange> first = {{3, 5}, {10, 12}};
    const std::vector<raster::BandRange> second = {{1, 1}, {20, 22}};

    // survivors of `first` in original 1-based indexing
    std::vector<int> survivors;
    for (int b = 1; b <= 24; ++b)
        if (!(b >= 3 && b <= 5) && !(b >= 10 && b <= 12)) survivors.push_back(b);
    // translate `second` (original indices) into post-first indexing
    std::vector<raster::BandRange> second_remapped;
    for (const auto& range : second) {
        int lo = 0, hi = 0;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            if (survivors[i] == range.first) lo = static_cast<int>(i) + 1;
            if (survivors[i] == range.last) hi = static_cast<int>(i) + 1;
        }
        REQUIRE(lo > 0);
        REQUIRE(hi > 0);
        second_remapped.push_back({lo, hi});
    }

    const auto sequential = raster::exclude_bands(raster::exclude_bands(cube, first), second_remapped);
    const auto combined = raster::exclude_bands(cube, {{3, 5}, {10, 12}, {1, 1}, {20, 22}});
    CHECK(sequential.bands == combined.bands);
    CHECK(sequential.values == combined.values);
}

TEST_CASE("compute_stats on a single labeled pixel gives min = max") {
    Rng rng(18);
    const auto cube = random_cube(rng, 3, 3, 4);
    LabelMap labels{3, 3, std::vector<std::uint16_t>(9, 0)};
    labels.at(1, 2) = 3;
    const auto stats = raster::compute_stats(cube, labels);
    for (int b = 0; b < 4; ++b) {
        CHECK(stats.min[b] == cube.at(1, 2, b));
        CHECK(stats.max[b] == cube.at(1, 2, b));
        CHECK(stats.constant(b));
    }
}

TEST_CASE("compute_stats finds per-band extremes over labeled pixels only") {
    RasterCube cube{1, 3, 1, {0.f, 10.f, 99.f}};
    LabelMap labels{1, 3, {1, 2, 0}};  // the 99 pixel is unlabeled
    const auto stats = raster::compute_stats(cube, labels);
    CHECK(stats.min[0] == 0.0f);
    CHECK(stats.max[0] == 10.0f);
}

TEST_CASE("compute_stats matches a brute-force scan on random scenes") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const auto cube = random_cube(rng, 8, 9, 3);
        const auto labels = random_labels(rng, 8, 9, 4, 0.5);
        bool any = false;
        for (auto l : labels.labels) any |= (l != 0);
        if (!any) continue;
        const auto stats = raster::compute_stats(cube, labels);
        for (int b = 0; b < 3; ++b) {
            float lo = std::numeric_limits<float>::max();
            float hi = std::numeric_limits<float>::lowest();
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 9; ++c)
                    if (labels.at(r, c) != 0) {
                        lo = std::min(lo, cube.at(r, c, b));
                        hi = std::max(hi, cube.at(r, c, b));
                    }
            CHECK(stats.min[b] == lo);
            CHECK(stats.max[b] == hi);
        }
    }
}

TEST_CASE("compute_stats requires at least one labeled pixel") {
    Rng rng(20);
    const auto cube = random_cube(rng, 2, 2, 1);
    LabelMap labels{2, 2, {0, 0, 0, 0}};
    CHECK_THROWS_AS(raster::compute_stats(cube, labels), DataError);
}

TEST_CASE("normalize maps endpoints, interior points and constant bands") {
    RasterCube cube{1, 4, 1, {2.f, 6.f, 3.f, 10.f}};
    raster::NormalizationStats stats{{2.f}, {6.f}};
    const auto out = raster::normalize(cube, stats);
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(out.at(0, 1, 0) == doctest::Approx(1.0));
    CHECK(out.at(0, 2, 0) == doctest::Approx(0.25));
    CHECK(out.at(0, 3, 0) == doctest::Approx(1.0));  // clamped

    raster::NormalizationStats flat{{5.f}, {5.f}};
    const auto zeros = raster::normalize(cube, flat);
    for (float v : zeros.values) CHECK(v == 0.0f);
}

TEST_CASE("normalize outputs always lie in [0,1]") {
    Rng rng(21);
    const auto cube = random_cube(rng, 6, 6, 2);
    raster::NormalizationStats stats{{0.f, -1.f}, {4.f, 2.f}};
    const auto out = raster::normalize(cube, stats);
    for (float v : out.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("normalize is idempotent under identity stats {0,1}") {
    Rng rng(28);
    auto cube = random_cube(rng, 5, 5, 3);
    raster::NormalizationStats identity{{0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}};
    const auto once = raster::normalize(cube, identity);
    const auto twice = raster::normalize(once, identity);
    CHECK(once.values == twice.values);
}

TEST_CASE("extract_patches single interior center covers the whole image") {
    Rng rng(22);
    const auto cube = random_cube(rng, 3, 3, 2);
    LabelMap labels{3, 3, std::vector<std::uint16_t>(9, 0)};
    labels.at(1, 1) = 2;
    // split needs >= 2, but extraction itself is fine with one
    const auto ds = raster::extract_patches(cube, labels, {3, BorderPolicy::skip});
    REQUIRE(ds.size() == 1);
    CHECK(ds.patches[0].center_label == 2);
    CHECK(ds.patches[0].values == cube.values);
    CHECK(ds.source_coords[0] == std::pair<int, int>{1, 1});
}

TEST_CASE("extract_patches with p=1 degenerates to pixel spectra") {
    Rng rng(23);
    const auto cube = random_cube(rng, 4, 4, 3);
    const auto labels = random_labels(rng, 4, 4, 3, 0.7);
    std::size_t labeled = 0;
    for (auto l : labels.labels) labeled += (l != 0);
    if (labeled == 0) return;
    const auto ds = raster::extract_patches(cube, labels, {1, BorderPolicy::skip});
    CHECK(ds.size() == labeled);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto [r, c] = ds.source_coords[i];
        for (int b = 0; b < 3; ++b) CHECK(ds.patches[i].values[b] == cube.at(r, c, b));
    }
}

TEST_CASE("extract_patches equals the window-scan oracle on random maps") {
    Rng rng(24);
    for (int trial = 0; trial < 25; ++trial) {
        const auto cube = random_cube(rng, 16, 16, 2);
        const auto labels = random_labels(rng, 16, 16, 4, 0.3);
        for (int p : {1, 3, 5, 7}) {
            for (bool mirror : {false, true}) {
                const auto policy = mirror ? BorderPolicy::mirror : BorderPolicy::skip;
                const auto expected = oracles::window_scan(cube, labels, p, mirror);
                if (expected.empty()) {
                    CHECK_THROWS_AS(raster::extract_patches(cube, labels, {p, policy}), DataError);
                    continue;
                }
                const auto ds = raster::extract_patches(cube, labels, {p, policy});
                REQUIRE(ds.size() == expected.size());
                for (std::size_t i = 0; i < expected.size(); ++i) {
                    CHECK(ds.source_coords[i] ==
                          std::pair<int, int>{expected[i].row, expected[i].col});
                    CHECK(ds.patches[i].center_label == expected[i].label);
                    CHECK(ds.patches[i].values == expected[i].values);
                }
            }
        }
    }
}

TEST_CASE("every extracted patch's center equals the cube value at its coordinate") {
    Rng rng(25);
    const auto cube = random_cube(rng, 12, 10, 3);
    const auto labels = random_labels(rng, 12, 10, 5, 0.4);
    const auto ds = raster::extract_patches(cube, labels, {5, BorderPolicy::mirror});
    const int h = 2;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto [r, c] = ds.source_coords[i];
        for (int b = 0; b < 3; ++b) {
            const std::size_t center = (static_cast<std::size_t>(h) * 5 + h) * 3 + b;
            CHECK(ds.patches[i].values[center] == cube.at(r, c, b));
        }
    }
}

TEST_CASE("extract_patches validates inputs") {
    Rng rng(26);
    const auto cube = random_cube(rng, 4, 4, 1);
    const auto labels = random_labels(rng, 4, 4, 2, 0.5);
    CHECK_THROWS_AS(raster::extract_patches(cube, labels, {4, BorderPolicy::skip}), ConfigError);
    LabelMap wrong{3, 4, std::vector<std::uint16_t>(12, 1)};
    CHECK_THROWS_AS(raster::extract_patches(cube, wrong, {3, BorderPolicy::skip}), DataError);
    LabelMap empty{4, 4, std::vector<std::uint16_t>(16, 0)};
    CHECK_THROWS_AS(raster::extract_patches(cube, empty, {1, BorderPolicy::skip}), DataError);
}

TEST_CASE("flatten_patch follows the row-col-band contract") {
    raster::Patch patch;
    patch.p = 3;
    patch.bands = 1;
    patch.center_label = 1;
    patch.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto flat = raster::flatten_patch(patch);
    CHECK(flat == std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});

    raster::Patch spectrum;
    spectrum.p = 1;
    spectrum.bands = 4;
    spectrum.center_label = 2;
    spectrum.values = {0.1f, 0.2f, 0.3f, 0.4f};
    CHECK(raster::flatten_patch(spectrum) == spectrum.values);
}

TEST_CASE("split_dataset produces the documented 75/25 partition") {
    raster::PatchDataset ds;
    ds.p = 1;
    ds.bands = 1;
    ds.class_ids = {1};
    for (int i = 0; i < 100; ++i) {
        raster::Patch patch;
        patch.p = 1;
        patch.bands = 1;
        patch.center_label = 1;
        patch.values = {static_cast<float>(i)};
        ds.patches.push_back(patch);
        ds.source_coords.emplace_back(0, i);
    }
    const auto [train, test] = raster::split_dataset(ds, 0.75, 7);
    CHECK(train.size() == 75);
    CHECK(test.size() == 25);
}

TEST_CASE("split_dataset is deterministic and stratified") {
    Rng rng(27);
    raster::PatchDataset ds;
    ds.p = 1;
    ds.bands = 1;
    ds.class_ids = {1, 2, 3, 4};
    int coord = 0;
    for (int cls = 1; cls <= 4; ++cls) {
        for (int i = 0; i < 40; ++i) {
            raster::Patch patch;
            patch.p = 1;
            patch.bands = 1;
            patch.center_label = cls;
            patch.values = {static_cast<float>(rng.unit())};
            ds.patches.push_back(patch);
            ds.source_coords.emplace_back(0, coord++);
        }
    }
    const auto [train_a, test_a] = raster::split_dataset(ds, 0.75, 99);
    const auto [train_b, test_b] = raster::split_dataset(ds, 0.75, 99);
    CHECK(train_a.source_coords == train_b.source_coords);
    CHECK(test_a.source_coords == test_b.source_coords);

    std::map<int, int> per_class;
    for (const auto& patch : train_a.patches) per_class[patch.center_label]++;
    for (int cls = 1; cls <= 4; ++cls) CHECK(per_class[cls] == 30);

    // partition: no coordinate on both sides, all accounted for
    std::set<std::pair<int, int>> seen;
    for (const auto& sc : train_a.source_coords) seen.insert(sc);
    for (const auto& sc : test_a.source_coords) {
        CHECK(seen.count(sc) == 0);
        seen.insert(sc);
    }
    CHECK(seen.size() == ds.size());
}

TEST_CASE("split_dataset rejects undersized classes and bad fractions") {
    raster::PatchDataset ds;
    ds.p = 1;
    ds.bands = 1;
    ds.class_ids = {1};
    raster::Patch patch;
    patch.p = 1;
    patch.bands = 1;
    patch.center_label = 1;
    patch.values = {0.f};
    ds.patches.push_back(patch);
    ds.source_coords.emplace_back(0, 0);
    CHECK_THROWS_AS(raster::split_dataset(ds, 0.75, 1), DataError);
    ds.patches.push_back(patch);
    ds.source_coords.emplace_back(0, 1);
    CHECK_THROWS_AS(raster::split_dataset(ds, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(raster::split_dataset(ds, 1.0, 1), ConfigError);
}

TEST_CASE("mirror_index reflects with edge repeat") {
    CHECK(raster::mirror_index(0, 5) == 0);
    CHECK(raster::mirror_index(-1, 5) == 0);
    CHECK(raster::mirror_index(-2, 5) == 1);
    CHECK(raster::mirror_index(5, 5) == 4);
    CHECK(raster::mirror_index(6, 5) == 3);
}
