#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchland/cnn.hpp"
#include "patchland/nn.hpp"
#include "patchland/raster.hpp"
#include "patchland/svm.hpp"

namespace patchland::eval {

struct ConfusionMatrix {
    std::vector<int> class_ids;
    std::vector<std::int64_t> counts;  // K x K, rows = reference, cols = predicted

    int k() const { return static_cast<int>(class_ids.size()); }
    std::int64_t at(int truth_idx, int pred_idx) const { return counts[truth_idx * k() + pred_idx]; }
    std::int64_t total() const;
    std::int64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& truth,
                          const std::vector<int>& class_ids);

/// 100 * trace / total.
double overall_accuracy(const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Classified-map rendering
// ---------------------------------------------------------------------------

struct ClassPalette {
    std::map<int, std::array<std::uint8_t, 3>> colors;  // class id -> RGB
};

/// Golden-angle hue stepping; 0 maps to black, distinct ids get distinct colors.
ClassPalette default_palette(const std::vector<int>& class_ids);
ClassPalette palette_from_csv(const std::filesystem::path& path);
void palette_to_csv(const std::filesystem::path& path, const ClassPalette& palette);

/// Binary PPM (P6), maxval 255; byte-exact function of its inputs.
std::vector<std::uint8_t> render_map(const raster::LabelMap& map, const ClassPalette& palette);

// ---------------------------------------------------------------------------
// Scene classification
// ---------------------------------------------------------------------------

/// Predictor over a flattened p x p x B window in [row][col][band] order.
using PatchPredictor = std::function<int(std::span<const float>)>;

/// Classifies every pixel of the (already normalized) cube using mirror-padded
/// windows. Output has the cube's dimensions and no zero labels.
raster::LabelMap classify_scene(const raster::RasterCube& cube, const PatchPredictor& predict,
                                int p, int threads = 1);

PatchPredictor make_predictor(const svm::SvmModel& model);
PatchPredictor make_predictor(const nn::Mlp<float>& model);
PatchPredictor make_predictor(const cnn::Cnn<float>& model);

// ---------------------------------------------------------------------------
// Patch-size sweep
// ---------------------------------------------------------------------------

struct SvmSettings {
    svm::SvmHyperparams hp;
};
struct NnSettings {
    std::vector<int> hidden_sizes{500, 350, 150};
    optim::TrainConfig cfg;
};
struct CnnSettings {
    cnn::CnnArch arch;
    optim::TrainConfig cfg;
};

struct ClassifierSuite {
    std::optional<SvmSettings> svm;
    std::optional<NnSettings> nn;
    std::optional<CnnSettings> cnn;
};

struct SweepRow {
    std::string classifier;
    int patch_size = 0;
    double accuracy_pct = 0.0;
    int train_n = 0;
    int test_n = 0;
    std::uint64_t seed = 0;
    double seconds = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

struct PreparedSplit {
    raster::PatchDataset train;
    raster::PatchDataset test;
    raster::NormalizationStats stats;  // computed on the training split only
};

/// extract -> stratified split -> train-only stats -> normalize both splits.
PreparedSplit prepare_split(const raster::RasterCube& cube, const raster::LabelMap& labels,
                            const raster::PatchSpec& spec, double train_fraction,
                            std::uint64_t seed);

/// Split seed shared by every classifier at a given p (fair comparison).
std::uint64_t split_seed(std::uint64_t seed, int p);

/// For each (classifier, p): extract, split, train, test, record accuracy.
/// on_row, when set, fires after each finished row (partial-result flushing).
SweepResult sweep_patch_sizes(const raster::RasterCube& cube, const raster::LabelMap& labels,
                              const ClassifierSuite& suite, const std::vector<int>& p_list,
                              std::uint64_t seed, double train_fraction = 0.75, int threads = 1,
                              const std::function<void(const SweepRow&)>& on_row = nullptr);

std::string sweep_to_csv(const SweepResult& result);
SweepResult sweep_from_csv(const std::string& text);

/// Metrics document: {classifier, p, seed, overall_accuracy, confusion,
/// class_ids, train_size, test_size}.
std::string metrics_json(const std::string& classifier, int p, std::uint64_t seed,
                         const ConfusionMatrix& cm, int train_n, int test_n);

std::vector<int> predict_dataset(const svm::SvmModel& model, const raster::PatchDataset& ds);
std::vector<int> predict_dataset(const nn::Mlp<float>& model, const raster::PatchDataset& ds);
std::vector<int> predict_dataset(const cnn::Cnn<float>& model, const raster::PatchDataset& ds);

}  // namespace patchland::eval
