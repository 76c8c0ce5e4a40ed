#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "patchland/eval.hpp"
#include "patchland/model.hpp"
#include "patchland/raster.hpp"

namespace patchland::cli {

/// Everything cmd_train needs besides file paths; also the surface the Python
/// bindings train through.
struct TrainSettings {
    std::string classifier = "svm";  // svm | nn | cnn
    int patch_size = 5;
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = hardware concurrency
    svm::SvmHyperparams svm_hp;
    std::vector<int> nn_hidden{500, 350, 150};
    optim::TrainConfig nn_cfg;
    cnn::CnnArch cnn_arch;
    optim::TrainConfig cnn_cfg;
};

struct TrainOutcome {
    TrainedModel model;
    eval::ConfusionMatrix cm;  // on the held-out test split
    int train_n = 0;
    int test_n = 0;
};

TrainSettings train_settings_from_json_string(const std::string& text);

/// extract -> split -> train-split stats -> normalize -> train -> score test.
TrainOutcome train_on_scene(const raster::RasterCube& cube, const raster::LabelMap& labels,
                            const TrainSettings& settings);

/// Entry point behind the `patchland` binary. Exit codes: 0 success,
/// 1 usage/config error, 2 data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace patchland::cli
