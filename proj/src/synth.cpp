#include "patchland/synth.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "patchland/errors.hpp"
#include "patchland/rng.hpp"

namespace patchland::synth {

namespace {

constexpr int kPlacementRetries = 1000;

bool overlaps(const FieldRect& a, const FieldRect& b) {
    return a.row0 < b.row0 + b.rows && b.row0 < a.row0 + a.rows && a.col0 < b.col0 + b.cols &&
           b.col0 < a.col0 + a.cols;
}

void validate(const SceneSpec& spec) {
    if (spec.rows < 4 || spec.cols < 4) throw ConfigError("scene must be at least 4x4");
    if (spec.bands < 1) throw ConfigError("scene needs at least one band");
    if (spec.class_count < 1) throw ConfigError("scene needs at least one class");
    if (spec.field_count < spec.class_count)
        throw ConfigError("field_count must be >= class_count so every class owns a field");
    if (spec.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (spec.salt_pepper_rate < 0.0 || spec.salt_pepper_rate >= 1.0)
        throw ConfigError("salt_pepper_rate must lie in [0, 1)");
    if (spec.salt_pepper_rate > 0.0 && spec.class_count < 2)
        throw ConfigError("spectrum swapping needs at least 2 classes");
    if (!spec.class_means.empty()) {
        if (static_cast<int>(spec.class_means.size()) != spec.class_count)
            throw ConfigError("class_means must have one row per class");
        for (const auto& row : spec.class_means)
            if (static_cast<int>(row.size()) != spec.bands)
                throw ConfigError("every class_means row must have one value per band");
    }
}

}  // namespace

std::vector<std::vector<float>> default_class_means(int class_count, int bands) {
    // Base reflectance level spaced per class, plus a class-specific spectral
    // ripple so classes differ in shape as well as level.
    std::vector<std::vector<float>> means(class_count, std::vector<float>(bands));
    for (int k = 0; k < class_count; ++k) {
        const double level =
            class_count == 1 ? 0.5 : 0.12 + 0.76 * static_cast<double>(k) / (class_count - 1);
        for (int b = 0; b < bands; ++b) {
            const double phase = 6.283185307179586 *
                (static_cast<double>(b) / bands + static_cast<double>(k) / class_count);
            const double v = level + 0.08 * std::sin(phase);
            means[k][b] = static_cast<float>(std::clamp(v, 0.02, 0.98));
        }
    }
    return means;
}

Scene generate_scene(const SceneSpec& spec) {
    validate(spec);
    const auto means =
        spec.class_means.empty() ? default_class_means(spec.class_count, spec.bands) : spec.class_means;

    Scene scene;
    scene.cube.rows = spec.rows;
    scene.cube.cols = spec.cols;
    scene.cube.bands = spec.bands;
    scene.cube.values.assign(static_cast<std::size_t>(spec.rows) * spec.cols * spec.bands, 0.0f);
    scene.labels.rows = spec.rows;
    scene.labels.cols = spec.cols;
    scene.labels.labels.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0);

    Rng place_rng(derive_seed(spec.seed, {0x504C4143ULL}));
    const int short_side = std::min(spec.rows, spec.cols);
    const int min_side = std::max(3, short_side / 10);
    const int max_side = std::max(min_side + 1, short_side / 3);

    for (int i = 0; i < spec.field_count; ++i) {
        const int class_id = 1 + i % spec.class_count;  // every class gets a field first
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
            FieldRect rect;
            rect.class_id = class_id;
            rect.rows = min_side + static_cast<int>(place_rng.below(max_side - min_side + 1));
            rect.cols = min_side + static_cast<int>(place_rng.below(max_side - min_side + 1));
            rect.row0 = static_cast<int>(place_rng.below(spec.rows - rect.rows + 1));
            rect.col0 = static_cast<int>(place_rng.below(spec.cols - rect.cols + 1));
            bool clash = false;
            for (const auto& other : scene.fields)
                if (overlaps(rect, other)) {
                    clash = true;
                    break;
                }
            if (clash) continue;
            scene.fields.push_back(rect);
            for (int r = rect.row0; r < rect.row0 + rect.rows; ++r)
                for (int c = rect.col0; c < rect.col0 + rect.cols; ++c)
                    scene.labels.at(r, c) = static_cast<std::uint16_t>(class_id);
            placed = true;
        }
        if (!placed)
            throw DataError("could not place field " + std::to_string(i + 1) + " of " +
                            std::to_string(spec.field_count) + " without overlap");
    }

    // Pixel spectra, row-major so the draw sequence is independent of placement.
    Rng px_rng(derive_seed(spec.seed, {0x50495845ULL}));
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const int label = scene.labels.at(r, c);
            int source_class = 0;  // 0 = background spectrum
            if (label != 0) {
                source_class = label;
                if (spec.salt_pepper_rate > 0.0 && px_rng.unit() < spec.salt_pepper_rate) {
                    // Swap in another class's spectrum; the label stays put.
                    const int offset = 1 + static_cast<int>(px_rng.below(spec.class_count - 1));
                    source_class = 1 + (label - 1 + offset) % spec.class_count;
                }
            }
            for (int b = 0; b < spec.bands; ++b) {
                const double base = source_class == 0 ? 0.5 : means[source_class - 1][b];
                const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * px_rng.normal() : 0.0;
                scene.cube.at(r, c, b) = static_cast<float>(base + noise);
            }
        }
    }
    return scene;
}

SceneSpec scene_spec_from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scene spec JSON: ") + e.what());
    }
    SceneSpec spec;
    try {
        spec.rows = j.at("rows").get<int>();
        spec.cols = j.at("cols").get<int>();
        spec.bands = j.at("bands").get<int>();
        spec.class_count = j.at("classes").get<int>();
        spec.field_count = j.value("fields", std::max(spec.class_count, 8));
        spec.noise_sigma = j.value("noise_sigma", 0.05);
        spec.salt_pepper_rate = j.value("salt_pepper_rate", 0.0);
        spec.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("class_means"))
            spec.class_means = j.at("class_means").get<std::vector<std::vector<float>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid scene spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

std::string scene_spec_to_json_string(const SceneSpec& spec) {
    nlohmann::json j;
    j["rows"] = spec.rows;
    j["cols"] = spec.cols;
    j["bands"] = spec.bands;
    j["classes"] = spec.class_count;
    j["fields"] = spec.field_count;
    j["noise_sigma"] = spec.noise_sigma;
    j["salt_pepper_rate"] = spec.salt_pepper_rate;
    j["seed"] = spec.seed;
    const auto means =
        spec.class_means.empty() ? default_class_means(spec.class_count, spec.bands) : spec.class_means;
    nlohmann::json means_json = nlohmann::json::array();
    for (const auto& row : means) {
        nlohmann::json r = nlohmann::json::array();
        for (float v : row) r.push_back(static_cast<double>(v));
        means_json.push_back(std::move(r));
    }
    j["class_means"] = std::move(means_json);
    return j.dump(2);
}

}  // namespace patchland::synth
