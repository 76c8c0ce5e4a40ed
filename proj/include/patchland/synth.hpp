#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchland/raster.hpp"

namespace patchland::synth {

/// Synthetic scene recipe: rectangular class fields on an unlabeled background,
/// per-band Gaussian noise, and a fraction of labeled pixels whose spectrum is
/// swapped with another class's (labels stay clean; pixel evidence degrades).
struct SceneSpec {
    int rows = 64;
    int cols = 64;
    int bands = 8;
    int class_count = 4;
    int field_count = 8;
    std::vector<std::vector<float>> class_means;  // K x B; defaulted when empty
    double noise_sigma = 0.05;
    double salt_pepper_rate = 0.0;
    std::uint64_t seed = 0;
};

struct FieldRect {
    int row0 = 0, col0 = 0, rows = 0, cols = 0;
    int class_id = 0;
    int area() const { return rows * cols; }
};

struct Scene {
    raster::RasterCube cube;
    raster::LabelMap labels;
    std::vector<FieldRect> fields;
};

/// Deterministic, well-separated default spectra for K classes over B bands.
std::vector<std::vector<float>> default_class_means(int class_count, int bands);

Scene generate_scene(const SceneSpec& spec);

SceneSpec scene_spec_from_json_string(const std::string& text);
std::string scene_spec_to_json_string(const SceneSpec& spec);

}  // namespace patchland::synth
