#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <fstream>
#include <optional>
#include <set>

#include "patchland/cli.hpp"
#include "patchland/errors.hpp"
#include "patchland/eval.hpp"
#include "patchland/model.hpp"
#include "patchland/raster.hpp"
#include "patchland/svm.hpp"
#include "patchland/synth.hpp"

namespace py = pybind11;
using namespace patchland;

namespace {

raster::RasterCube cube_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3) throw DataError("cube array must have shape (rows, cols, bands)");
    raster::RasterCube cube;
    cube.rows = static_cast<int>(arr.shape(0));
    cube.cols = static_cast<int>(arr.shape(1));
    cube.bands = static_cast<int>(arr.shape(2));
    cube.values.assign(arr.data(), arr.data() + arr.size());
    return cube;
}

py::array_t<float> cube_to_numpy(const raster::RasterCube& cube) {
    py::array_t<float> arr({cube.rows, cube.cols, cube.bands});
    std::memcpy(arr.mutable_data(), cube.values.data(), cube.values.size() * sizeof(float));
    return arr;
}

raster::LabelMap labels_from_numpy(const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw DataError("label array must have shape (rows, cols)");
    raster::LabelMap map;
    map.rows = static_cast<int>(arr.shape(0));
    map.cols = static_cast<int>(arr.shape(1));
    map.labels.assign(arr.data(), arr.data() + arr.size());
    return map;
}

py::array_t<std::uint16_t> labels_to_numpy(const raster::LabelMap& map) {
    py::array_t<std::uint16_t> arr({map.rows, map.cols});
    std::memcpy(arr.mutable_data(), map.labels.data(), map.labels.size() * sizeof(std::uint16_t));
    return arr;
}

py::array_t<float> dataset_features(const raster::PatchDataset& ds) {
    const int n = static_cast<int>(ds.size());
    const int d = ds.feature_length();
    py::array_t<float> arr({n, d});
    for (int i = 0; i < n; ++i)
        std::memcpy(arr.mutable_data(i, 0), ds.patches[i].values.data(), sizeof(float) * d);
    return arr;
}

py::array_t<float> dataset_tensors(const raster::PatchDataset& ds) {
    const int n = static_cast<int>(ds.size());
    py::array_t<float> arr({n, ds.p, ds.p, ds.bands});
    for (int i = 0; i < n; ++i)
        std::memcpy(arr.mutable_data(i, 0, 0, 0), ds.patches[i].values.data(),
                    sizeof(float) * ds.patches[i].values.size());
    return arr;
}

py::array_t<std::int32_t> dataset_labels(const raster::PatchDataset& ds) {
    py::array_t<std::int32_t> arr(static_cast<py::ssize_t>(ds.size()));
    auto* out = arr.mutable_data();
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ds.patches[i].center_label;
    return arr;
}

py::array_t<std::int32_t> dataset_coords(const raster::PatchDataset& ds) {
    py::array_t<std::int32_t> arr({static_cast<int>(ds.size()), 2});
    for (std::size_t i = 0; i < ds.size(); ++i) {
        *arr.mutable_data(i, 0) = ds.source_coords[i].first;
        *arr.mutable_data(i, 1) = ds.source_coords[i].second;
    }
    return arr;
}

}  // namespace

PYBIND11_MODULE(_patchland, m) {
    m.doc() = "Patch-based land cover classification toolkit (C++ core)";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<raster::PatchDataset>(m, "PatchDataset")
        .def_property_readonly("p", [](const raster::PatchDataset& ds) { return ds.p; })
        .def_property_readonly("bands", [](const raster::PatchDataset& ds) { return ds.bands; })
        .def_property_readonly("class_ids",
                               [](const raster::PatchDataset& ds) { return ds.class_ids; })
        .def("__len__", [](const raster::PatchDataset& ds) { return ds.size(); })
        .def("features", &dataset_features, "Flattened patches, shape (n, p*p*bands)")
        .def("tensors", &dataset_tensors, "Patch tensors, shape (n, p, p, bands)")
        .def("labels", &dataset_labels)
        .def("coords", &dataset_coords);

    py::class_<TrainedModel>(m, "Model")
        .def_property_readonly("classifier",
                               [](const TrainedModel& m_) { return m_.classifier; })
        .def_property_readonly("patch_size",
                               [](const TrainedModel& m_) { return m_.patch_size; })
        .def_property_readonly("bands", [](const TrainedModel& m_) { return m_.bands; })
        .def_property_readonly("class_ids",
                               [](const TrainedModel& m_) { return m_.class_ids(); })
        .def("predict",
             [](const TrainedModel& model,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& features) {
                 if (features.ndim() != 2)
                     throw DataError("features must have shape (n, feature_length)");
                 const int n = static_cast<int>(features.shape(0));
                 const int d = static_cast<int>(features.shape(1));
                 py::array_t<std::int32_t> out(n);
                 for (int i = 0; i < n; ++i)
                     *out.mutable_data(i) = model.predict_window(
                         std::span<const float>(features.data(i, 0), static_cast<std::size_t>(d)));
                 return out;
             },
             py::arg("features"), "Predict class ids for normalized flattened windows")
        .def("classify_scene",
             [](const TrainedModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
                int threads) {
                 return labels_to_numpy(classify_scene_with_model(cube_from_numpy(cube), model,
                                                                  threads > 0 ? threads : 1));
             },
             py::arg("cube"), py::arg("threads") = 1,
             "Classify every pixel of a raw cube (mirror-padded windows)")
        .def("to_json", &model_to_json_string)
        .def_static("from_json", &model_from_json_string)
        .def("save", [](const TrainedModel& model, const std::string& path) { save_model(path, model); })
        .def_static("load", [](const std::string& path) { return load_model(path); });

    m.def("generate_scene_json", [](const std::string& spec_json) {
        const auto scene = synth::generate_scene(synth::scene_spec_from_json_string(spec_json));
        return py::make_tuple(cube_to_numpy(scene.cube), labels_to_numpy(scene.labels));
    });

    m.def("load_cube", [](const std::string& path) { return cube_to_numpy(raster::load_cube(path)); });
    m.def("write_cube", [](const std::string& path,
                           const py::array_t<float, py::array::c_style | py::array::forcecast>& cube) {
        raster::write_cube(path, cube_from_numpy(cube));
    });
    m.def("load_labels",
          [](const std::string& path) { return labels_to_numpy(raster::load_labels(path)); });
    m.def("write_labels", [](const std::string& path,
                             const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& labels) {
        raster::write_labels(path, labels_from_numpy(labels));
    });

    m.def("exclude_bands",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
             const std::vector<std::pair<int, int>>& ranges) {
              std::vector<raster::BandRange> drop;
              for (const auto& [first, last] : ranges) drop.push_back({first, last});
              return cube_to_numpy(raster::exclude_bands(cube_from_numpy(cube), drop));
          },
          py::arg("cube"), py::arg("ranges"), "Drop 1-based inclusive band index ranges");

    m.def("compute_stats",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
             const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& labels) {
              const auto stats = raster::compute_stats(cube_from_numpy(cube), labels_from_numpy(labels));
              return py::make_tuple(py::array_t<float>(py::cast(stats.min)),
                                    py::array_t<float>(py::cast(stats.max)));
          });

    m.def("normalize",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
             const std::vector<float>& lo, const std::vector<float>& hi) {
              raster::NormalizationStats stats{lo, hi};
              return cube_to_numpy(raster::normalize(cube_from_numpy(cube), stats));
          },
          py::arg("cube"), py::arg("min"), py::arg("max"));

    m.def("extract_patches",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
             const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& labels,
             int p, const std::string& border) {
              raster::PatchSpec spec;
              spec.p = p;
              if (border == "skip")
                  spec.border = raster::BorderPolicy::skip;
              else if (border == "mirror")
                  spec.border = raster::BorderPolicy::mirror;
              else
                  throw ConfigError("border must be 'skip' or 'mirror'");
              return raster::extract_patches(cube_from_numpy(cube), labels_from_numpy(labels), spec);
          },
          py::arg("cube"), py::arg("labels"), py::arg("p"), py::arg("border") = "skip");

    m.def("split_dataset",
          [](const raster::PatchDataset& ds, double fraction, std::uint64_t seed) {
              auto [train, test] = raster::split_dataset(ds, fraction, seed);
              return py::make_tuple(std::move(train), std::move(test));
          },
          py::arg("dataset"), py::arg("train_fraction") = 0.75, py::arg("seed") = 0);

    m.def("train_json",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& cube,
             const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& labels,
             const std::string& config_json) {
              const auto settings = cli::train_settings_from_json_string(config_json);
              const auto outcome =
                  cli::train_on_scene(cube_from_numpy(cube), labels_from_numpy(labels), settings);
              const std::string metrics =
                  eval::metrics_json(settings.classifier, settings.patch_size, settings.seed,
                                     outcome.cm, outcome.train_n, outcome.test_n);
              return py::make_tuple(outcome.model, metrics);
          });

    m.def("overall_accuracy",
          [](const std::vector<int>& predictions, const std::vector<int>& truth) {
              std::set<int> ids(truth.begin(), truth.end());
              ids.insert(predictions.begin(), predictions.end());
              const std::vector<int> class_ids(ids.begin(), ids.end());
              return eval::overall_accuracy(eval::confusion(predictions, truth, class_ids));
          });

    m.def("render_map",
          [](const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& labels,
             const std::string& path, const std::optional<std::map<int, std::array<int, 3>>>& palette) {
              const auto map = labels_from_numpy(labels);
              eval::ClassPalette pal;
              if (palette) {
                  for (const auto& [id, rgb] : *palette)
                      pal.colors[id] = {static_cast<std::uint8_t>(rgb[0]),
                                        static_cast<std::uint8_t>(rgb[1]),
                                        static_cast<std::uint8_t>(rgb[2])};
              } else {
                  std::set<int> ids(map.labels.begin(), map.labels.end());
                  pal = eval::default_palette(std::vector<int>(ids.begin(), ids.end()));
              }
              const auto bytes = eval::render_map(map, pal);
              std::ofstream out(path, std::ios::binary);
              if (!out) throw DataError("cannot open " + path + " for writing");
              out.write(reinterpret_cast<const char*>(bytes.data()),
                        static_cast<std::streamsize>(bytes.size()));
          },
          py::arg("labels"), py::arg("path"), py::arg("palette") = std::nullopt);

    m.def("rbf_kernel",
          [](const std::vector<float>& x, const std::vector<float>& y, double gamma) {
              return svm::rbf_kernel(x, y, gamma);
          });

    m.attr("__version__") = "0.1.0";
}
