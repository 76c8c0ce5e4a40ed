#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace patchland::raster {

enum class BorderPolicy { skip, mirror };

/// Reflectance cube, row-major [row][col][band].
struct RasterCube {
    int rows = 0;
    int cols = 0;
    int bands = 0;
    std::vector<float> values;

    float at(int r, int c, int b) const { return values[(static_cast<std::size_t>(r) * cols + c) * bands + b]; }
    float& at(int r, int c, int b) { return values[(static_cast<std::size_t>(r) * cols + c) * bands + b]; }
    std::size_t size() const { return values.size(); }
};

/// Ground-reference class ids; 0 marks pixels with no class information.
struct LabelMap {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint16_t> labels;

    std::uint16_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
    std::uint16_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * cols + c]; }
};

struct PatchSpec {
    int p = 5;  // odd side length
    BorderPolicy border = BorderPolicy::skip;
};

/// One p x p x B window, row-major [row][col][band], labeled by its center pixel.
struct Patch {
    int p = 0;
    int bands = 0;
    std::vector<float> values;
    int center_label = 0;
};

struct PatchDataset {
    int p = 0;
    int bands = 0;
    std::vector<Patch> patches;
    std::vector<std::pair<int, int>> source_coords;  // (row, col) of each center
    std::vector<int> class_ids;                      // sorted distinct labels

    int class_count() const { return static_cast<int>(class_ids.size()); }
    std::size_t size() const { return patches.size(); }
    int feature_length() const { return p * p * bands; }
};

struct NormalizationStats {
    std::vector<float> min;
    std::vector<float> max;

    int bands() const { return static_cast<int>(min.size()); }
    bool constant(int b) const { return !(max[b] > min[b]); }
};

/// 1-based inclusive band index range, e.g. {196, 207}.
struct BandRange {
    int first = 1;
    int last = 1;
};

// cube1 / lbl1 container I/O. Headers are a single JSON line; payload is
// little-endian and bit-exact (see README for the format contract).
RasterCube load_cube(const std::filesystem::path& path);
void write_cube(const std::filesystem::path& path, const RasterCube& cube);
LabelMap load_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelMap& map);

RasterCube exclude_bands(const RasterCube& cube, const std::vector<BandRange>& drop);
NormalizationStats compute_stats(const RasterCube& cube, const LabelMap& labels);
RasterCube normalize(const RasterCube& cube, const NormalizationStats& stats);
void normalize_patches(PatchDataset& ds, const NormalizationStats& stats);

PatchDataset extract_patches(const RasterCube& cube, const LabelMap& labels, const PatchSpec& spec);
std::vector<float> flatten_patch(const Patch& patch);

/// Stratified split: per class, floor(fraction * n) samples (at least 1) go to
/// train, the rest to test. Seed-deterministic.
std::pair<PatchDataset, PatchDataset> split_dataset(const PatchDataset& ds, double train_fraction,
                                                    std::uint64_t seed);

/// Reflects an out-of-range index back into [0, n), repeating the edge sample.
int mirror_index(int i, int n);

/// Mirror-padded p x p window around (r, c), same layout as Patch values.
std::vector<float> window_values(const RasterCube& cube, int r, int c, int p);

}  // namespace patchland::raster
