#include "patchland/nn.hpp"

#include <json.hpp>

namespace patchland::nn {

std::string to_json_string(const Mlp<float>& m) {
    nlohmann::json j;
    j["layer_sizes"] = m.layer_sizes;
    j["class_ids"] = m.class_ids;
    nlohmann::json weights = nlohmann::json::array();
    for (int l = 0; l < m.layer_count(); ++l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        nlohmann::json mat = nlohmann::json::array();
        for (int o = 0; o < out; ++o) {
            nlohmann::json row = nlohmann::json::array();
            for (int i = 0; i < in; ++i)
                row.push_back(static_cast<double>(m.weights[l][static_cast<std::size_t>(o) * in + i]));
            mat.push_back(std::move(row));
        }
        weights.push_back(std::move(mat));
    }
    j["weights"] = std::move(weights);
    nlohmann::json biases = nlohmann::json::array();
    for (const auto& b : m.biases) {
        nlohmann::json row = nlohmann::json::array();
        for (float v : b) row.push_back(static_cast<double>(v));
        biases.push_back(std::move(row));
    }
    j["biases"] = std::move(biases);
    return j.dump();
}

Mlp<float> mlp_from_json_string(const std::string& text) {
    Mlp<float> m;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        m.class_ids = j.at("class_ids").get<std::vector<int>>();
        for (const auto& mat : j.at("weights")) {
            std::vector<float> w;
            for (const auto& row : mat)
                for (const auto& v : row) w.push_back(static_cast<float>(v.get<double>()));
            m.weights.push_back(std::move(w));
        }
        for (const auto& row : j.at("biases")) {
            std::vector<float> b;
            for (const auto& v : row) b.push_back(static_cast<float>(v.get<double>()));
            m.biases.push_back(std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed MLP model JSON: ") + e.what());
    }
    if (m.layer_sizes.size() < 2 || m.weights.size() != m.layer_sizes.size() - 1 ||
        m.biases.size() != m.weights.size())
        throw DataError("MLP model JSON has inconsistent layer structure");
    for (int l = 0; l < m.layer_count(); ++l) {
        const std::size_t expect_w =
            static_cast<std::size_t>(m.layer_sizes[l]) * m.layer_sizes[l + 1];
        if (m.weights[l].size() != expect_w ||
            m.biases[l].size() != static_cast<std::size_t>(m.layer_sizes[l + 1]))
            throw DataError("MLP model JSON has inconsistent parameter shapes");
    }
    return m;
}

}  // namespace patchland::nn
