#include "patchland/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "patchland/errors.hpp"

namespace patchland {

const std::vector<int>& TrainedModel::class_ids() const {
    return std::visit([](const auto& m) -> const std::vector<int>& { return m.class_ids; }, payload);
}

int TrainedModel::predict_window(std::span<const float> window) const {
    if (static_cast<int>(window.size()) != feature_length())
        throw DataError("predict: window length does not match model geometry");
    if (const auto* m = std::get_if<svm::SvmModel>(&payload)) return svm::predict(*m, window);
    if (const auto* m = std::get_if<nn::Mlp<float>>(&payload)) return nn::mlp_predict(*m, window);
    const auto& m = std::get<cnn::Cnn<float>>(payload);
    raster::Patch patch;
    patch.p = patch_size;
    patch.bands = bands;
    patch.center_label = 1;
    patch.values.assign(window.begin(), window.end());
    return cnn::cnn_predict(m, patch);
}

eval::PatchPredictor TrainedModel::predictor() const {
    return [this](std::span<const float> window) { return predict_window(window); };
}

std::string model_to_json_string(const TrainedModel& model) {
    nlohmann::json j;
    j["format"] = "patchland-model/1";
    j["classifier"] = model.classifier;
    j["patch_size"] = model.patch_size;
    j["bands"] = model.bands;
    nlohmann::json stats;
    stats["min"] = nlohmann::json::array();
    stats["max"] = nlohmann::json::array();
    for (float v : model.stats.min) stats["min"].push_back(static_cast<double>(v));
    for (float v : model.stats.max) stats["max"].push_back(static_cast<double>(v));
    j["stats"] = std::move(stats);
    // The classifier payload keeps its own schema under a key named after it.
    if (const auto* m = std::get_if<svm::SvmModel>(&model.payload))
        j["svm"] = nlohmann::json::parse(svm::to_json_string(*m));
    else if (const auto* m = std::get_if<nn::Mlp<float>>(&model.payload))
        j["nn"] = nlohmann::json::parse(nn::to_json_string(*m));
    else
        j["cnn"] = nlohmann::json::parse(cnn::to_json_string(std::get<cnn::Cnn<float>>(model.payload)));
    return j.dump();
}

TrainedModel model_from_json_string(const std::string& text) {
    TrainedModel model;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        if (j.value("format", "") != "patchland-model/1")
            throw DataError("not a patchland model file (missing format tag)");
        model.classifier = j.at("classifier").get<std::string>();
        model.patch_size = j.at("patch_size").get<int>();
        model.bands = j.at("bands").get<int>();
        for (const auto& v : j.at("stats").at("min"))
            model.stats.min.push_back(static_cast<float>(v.get<double>()));
        for (const auto& v : j.at("stats").at("max"))
            model.stats.max.push_back(static_cast<float>(v.get<double>()));
        if (model.classifier == "svm")
            model.payload = svm::svm_from_json_string(j.at("svm").dump());
        else if (model.classifier == "nn")
            model.payload = nn::mlp_from_json_string(j.at("nn").dump());
        else if (model.classifier == "cnn")
            model.payload = cnn::cnn_from_json_string(j.at("cnn").dump());
        else
            throw DataError("unknown classifier kind '" + model.classifier + "'");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
    return model;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << model_to_json_string(model) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json_string(buf.str());
}

raster::LabelMap classify_scene_with_model(const raster::RasterCube& cube,
                                           const TrainedModel& model, int threads) {
    if (cube.bands != model.bands)
        throw DataError("cube has " + std::to_string(cube.bands) + " bands but model expects " +
                        std::to_string(model.bands));
    const auto normalized = raster::normalize(cube, model.stats);
    return eval::classify_scene(normalized, model.predictor(), model.patch_size, threads);
}

}  // namespace patchland
