#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "patchland/cnn.hpp"
#include "patchland/eval.hpp"
#include "patchland/nn.hpp"
#include "patchland/raster.hpp"
#include "patchland/svm.hpp"

namespace patchland {

/// A trained classifier plus everything needed to apply it to raw scenes:
/// patch geometry and the normalization stats of its training split.
struct TrainedModel {
    std::string classifier;  // "svm" | "nn" | "cnn"
    int patch_size = 0;
    int bands = 0;
    raster::NormalizationStats stats;
    std::variant<svm::SvmModel, nn::Mlp<float>, cnn::Cnn<float>> payload;

    int feature_length() const { return patch_size * patch_size * bands; }
    const std::vector<int>& class_ids() const;

    /// Predicts from an already-normalized flattened window.
    int predict_window(std::span<const float> window) const;
    eval::PatchPredictor predictor() const;
};

std::string model_to_json_string(const TrainedModel& model);
TrainedModel model_from_json_string(const std::string& text);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

/// Normalizes the cube with the model's stats and classifies every pixel
/// through mirror-padded windows.
raster::LabelMap classify_scene_with_model(const raster::RasterCube& cube,
                                           const TrainedModel& model, int threads = 1);

}  // namespace patchland
