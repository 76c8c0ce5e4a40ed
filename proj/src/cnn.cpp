#include "patchland/cnn.hpp"

#include <json.hpp>

namespace patchland::cnn {

namespace {

nlohmann::json floats_to_json(const std::vector<float>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (float x : v) a.push_back(static_cast<double>(x));
    return a;
}

std::vector<float> floats_from_json(const nlohmann::json& a) {
    std::vector<float> v;
    v.reserve(a.size());
    for (const auto& x : a) v.push_back(static_cast<float>(x.get<double>()));
    return v;
}

}  // namespace

std::string to_json_string(const Cnn<float>& m) {
    nlohmann::json j;
    j["arch"] = {{"conv_filters", m.arch.conv_filters}, {"fc_sizes", m.arch.fc_sizes}};
    j["input_geometry"] = {{"patch_size", m.patch_size}, {"bands", m.bands}};
    j["class_ids"] = m.class_ids;
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& layer : m.conv) {
        // kernel layout: [filter][kr][kc][cin], 5x5 spatial
        conv.push_back({{"in_channels", layer.in_channels},
                        {"filters", layer.filters},
                        {"weights", floats_to_json(layer.weights)},
                        {"biases", floats_to_json(layer.biases)}});
    }
    j["conv"] = std::move(conv);
    nlohmann::json fc = nlohmann::json::array();
    for (std::size_t l = 0; l < m.fc_weights.size(); ++l)
        fc.push_back({{"weights", floats_to_json(m.fc_weights[l])},
                      {"biases", floats_to_json(m.fc_biases[l])}});
    j["fc"] = std::move(fc);
    return j.dump();
}

Cnn<float> cnn_from_json_string(const std::string& text) {
    Cnn<float> m;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        m.arch.conv_filters = j.at("arch").at("conv_filters").get<std::vector<int>>();
        m.arch.fc_sizes = j.at("arch").at("fc_sizes").get<std::vector<int>>();
        m.patch_size = j.at("input_geometry").at("patch_size").get<int>();
        m.bands = j.at("input_geometry").at("bands").get<int>();
        m.class_ids = j.at("class_ids").get<std::vector<int>>();
        for (const auto& layer_json : j.at("conv")) {
            ConvLayer<float> layer;
            layer.in_channels = layer_json.at("in_channels").get<int>();
            layer.filters = layer_json.at("filters").get<int>();
            layer.weights = floats_from_json(layer_json.at("weights"));
            layer.biases = floats_from_json(layer_json.at("biases"));
            m.conv.push_back(std::move(layer));
        }
        for (const auto& fc_json : j.at("fc")) {
            m.fc_weights.push_back(floats_from_json(fc_json.at("weights")));
            m.fc_biases.push_back(floats_from_json(fc_json.at("biases")));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed CNN model JSON: ") + e.what());
    }
    if (m.conv.size() != 2) throw DataError("CNN model JSON must have two conv layers");
    for (const auto& layer : m.conv) {
        const std::size_t expect =
            static_cast<std::size_t>(layer.filters) * kKernelSize * kKernelSize * layer.in_channels;
        if (layer.weights.size() != expect ||
            layer.biases.size() != static_cast<std::size_t>(layer.filters))
            throw DataError("CNN model JSON has inconsistent conv shapes");
    }
    m.fc_dims.push_back(flatten_length(m.patch_size, m.arch));
    m.fc_dims.insert(m.fc_dims.end(), m.arch.fc_sizes.begin(), m.arch.fc_sizes.end());
    m.fc_dims.push_back(static_cast<int>(m.class_ids.size()));
    if (m.fc_weights.size() != m.fc_dims.size() - 1 || m.fc_biases.size() != m.fc_weights.size())
        throw DataError("CNN model JSON has inconsistent fc layer count");
    for (std::size_t l = 0; l + 1 < m.fc_dims.size(); ++l) {
        if (m.fc_weights[l].size() !=
                static_cast<std::size_t>(m.fc_dims[l]) * m.fc_dims[l + 1] ||
            m.fc_biases[l].size() != static_cast<std::size_t>(m.fc_dims[l + 1]))
            throw DataError("CNN model JSON has inconsistent fc shapes");
    }
    return m;
}

}  // namespace patchland::cnn
