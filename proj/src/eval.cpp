#include "patchland/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "patchland/errors.hpp"
#include "patchland/rng.hpp"

namespace patchland::eval {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t sum = 0;
    for (int i = 0; i < k(); ++i) sum += at(i, i);
    return sum;
}

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& truth,
                          const std::vector<int>& class_ids) {
    if (predictions.size() != truth.size())
        throw DataError("confusion: prediction and truth lengths differ");
    ConfusionMatrix cm;
    cm.class_ids = class_ids;
    cm.counts.assign(static_cast<std::size_t>(cm.k()) * cm.k(), 0);
    auto index_of = [&class_ids](int label) {
        const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), label);
        if (it == class_ids.end() || *it != label)
            throw DataError("confusion: label " + std::to_string(label) + " not in class set");
        return static_cast<int>(it - class_ids.begin());
    };
    for (std::size_t i = 0; i < truth.size(); ++i)
        cm.counts[static_cast<std::size_t>(index_of(truth[i])) * cm.k() + index_of(predictions[i])] += 1;
    return cm;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total <= 0) throw DataError("overall_accuracy: empty confusion matrix");
    return 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Palette and rendering
// ---------------------------------------------------------------------------

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    auto to_byte = [m](double t) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(t + m, 0.0, 1.0) * 255.0));
    };
    return {to_byte(r), to_byte(g), to_byte(b)};
}

}  // namespace

ClassPalette default_palette(const std::vector<int>& class_ids) {
    ClassPalette palette;
    palette.colors[0] = {0, 0, 0};
    std::set<std::array<std::uint8_t, 3>> used{{0, 0, 0}};
    for (int id : class_ids) {
        if (id == 0) continue;
        const double hue = std::fmod(static_cast<double>(id) * 137.50776405003785, 360.0);
        double value = 0.95;
        auto rgb = hsv_to_rgb(hue, 0.78, value);
        while (used.count(rgb)) {  // nudge brightness on the rare collision
            value = value > 0.2 ? value - 0.13 : 0.95;
            rgb = hsv_to_rgb(hue, 0.78, value);
        }
        used.insert(rgb);
        palette.colors[id] = rgb;
    }
    return palette;
}

ClassPalette palette_from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open palette file " + path.string());
    ClassPalette palette;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        int id, r, g, b;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%d", &id, &r, &g, &b) != 4)
            throw DataError("bad palette line " + std::to_string(line_no) + " in " + path.string());
        if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
            throw DataError("palette RGB out of range on line " + std::to_string(line_no));
        palette.colors[id] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                              static_cast<std::uint8_t>(b)};
    }
    return palette;
}

void palette_to_csv(const std::filesystem::path& path, const ClassPalette& palette) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    for (const auto& [id, rgb] : palette.colors)
        out << id << ',' << static_cast<int>(rgb[0]) << ',' << static_cast<int>(rgb[1]) << ','
            << static_cast<int>(rgb[2]) << '\n';
}

std::vector<std::uint8_t> render_map(const raster::LabelMap& map, const ClassPalette& palette) {
    char header[64];
    std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", map.cols, map.rows);
    std::vector<std::uint8_t> out(header, header + std::strlen(header));
    out.reserve(out.size() + map.labels.size() * 3);
    for (std::uint16_t label : map.labels) {
        const auto it = palette.colors.find(label);
        if (it == palette.colors.end())
            throw DataError("no palette entry for class " + std::to_string(label));
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scene classification
// ---------------------------------------------------------------------------

raster::LabelMap classify_scene(const raster::RasterCube& cube, const PatchPredictor& predict,
                                int p, int threads) {
    if (p <= 0 || p % 2 == 0) throw ConfigError("classify_scene: patch size must be odd");
    raster::LabelMap out;
    out.rows = cube.rows;
    out.cols = cube.cols;
    out.labels.assign(static_cast<std::size_t>(cube.rows) * cube.cols, 0);

    auto run_rows = [&](int row_begin, int row_end) {
        for (int r = row_begin; r < row_end; ++r) {
            for (int c = 0; c < cube.cols; ++c) {
                const auto window = raster::window_values(cube, r, c, p);
                const int label = predict(window);
                if (label <= 0) throw NumericError("classify_scene: predictor returned non-positive class");
                out.at(r, c) = static_cast<std::uint16_t>(label);
            }
        }
    };

    const int workers = std::clamp(threads, 1, cube.rows);
    if (workers == 1) {
        run_rows(0, cube.rows);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex err_mutex;
        const int chunk = (cube.rows + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int begin = w * chunk;
            const int end = std::min(cube.rows, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, begin, end] {
                try {
                    run_rows(begin, end);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return out;
}

PatchPredictor make_predictor(const svm::SvmModel& model) {
    return [&model](std::span<const float> window) { return svm::predict(model, window); };
}

PatchPredictor make_predictor(const nn::Mlp<float>& model) {
    return [&model](std::span<const float> window) { return nn::mlp_predict(model, window); };
}

PatchPredictor make_predictor(const cnn::Cnn<float>& model) {
    return [&model](std::span<const float> window) {
        raster::Patch patch;
        patch.p = model.patch_size;
        patch.bands = model.bands;
        patch.center_label = 1;  // placeholder; prediction ignores it
        patch.values.assign(window.begin(), window.end());
        return cnn::cnn_predict(model, patch);
    };
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::uint64_t split_seed(std::uint64_t seed, int p) {
    return derive_seed(seed, {0x53504C54ULL, static_cast<std::uint64_t>(p)});
}

PreparedSplit prepare_split(const raster::RasterCube& cube, const raster::LabelMap& labels,
                            const raster::PatchSpec& spec, double train_fraction,
                            std::uint64_t seed) {
    const auto ds = raster::extract_patches(cube, labels, spec);
    auto [train, test] = raster::split_dataset(ds, train_fraction, split_seed(seed, spec.p));

    // Scaling is defined by the training split only: mask everything else out.
    raster::LabelMap train_mask;
    train_mask.rows = labels.rows;
    train_mask.cols = labels.cols;
    train_mask.labels.assign(labels.labels.size(), 0);
    for (std::size_t i = 0; i < train.source_coords.size(); ++i) {
        const auto [r, c] = train.source_coords[i];
        train_mask.at(r, c) = static_cast<std::uint16_t>(train.patches[i].center_label);
    }
    PreparedSplit out{std::move(train), std::move(test), raster::compute_stats(cube, train_mask)};
    raster::normalize_patches(out.train, out.stats);
    raster::normalize_patches(out.test, out.stats);
    return out;
}

std::vector<int> predict_dataset(const svm::SvmModel& model, const raster::PatchDataset& ds) {
    std::vector<int> out;
    out.reserve(ds.patches.size());
    for (const auto& patch : ds.patches) out.push_back(svm::predict(model, patch.values));
    return out;
}

std::vector<int> predict_dataset(const nn::Mlp<float>& model, const raster::PatchDataset& ds) {
    std::vector<int> out;
    out.reserve(ds.patches.size());
    for (const auto& patch : ds.patches)
        out.push_back(nn::mlp_predict(model, std::span<const float>(patch.values)));
    return out;
}

std::vector<int> predict_dataset(const cnn::Cnn<float>& model, const raster::PatchDataset& ds) {
    std::vector<int> out;
    out.reserve(ds.patches.size());
    for (const auto& patch : ds.patches) out.push_back(cnn::cnn_predict(model, patch));
    return out;
}

SweepResult sweep_patch_sizes(const raster::RasterCube& cube, const raster::LabelMap& labels,
                              const ClassifierSuite& suite, const std::vector<int>& p_list,
                              std::uint64_t seed, double train_fraction, int threads,
                              const std::function<void(const SweepRow&)>& on_row) {
    for (int p : p_list)
        if (p <= 0 || p % 2 == 0)
            throw ConfigError("sweep: patch sizes must be odd, got " + std::to_string(p));

    SweepResult result;
    auto record = [&](const std::string& name, int p, const raster::PatchDataset& test,
                      const std::vector<int>& predictions, int train_n, double seconds) {
        std::vector<int> truth;
        truth.reserve(test.patches.size());
        for (const auto& patch : test.patches) truth.push_back(patch.center_label);
        const auto cm = confusion(predictions, truth, test.class_ids);
        SweepRow row{name, p, overall_accuracy(cm), train_n, static_cast<int>(test.size()), seed,
                     seconds};
        result.rows.push_back(row);
        if (on_row) on_row(row);
    };

    for (int p : p_list) {
        const auto split = prepare_split(cube, labels, {p, raster::BorderPolicy::skip},
                                         train_fraction, seed);
        const int train_n = static_cast<int>(split.train.size());
        using clock = std::chrono::steady_clock;
        if (suite.svm) {
            const auto t0 = clock::now();
            const auto model = svm::train_ovo(split.train, suite.svm->hp,
                                              derive_seed(seed, {0x53564DULL, static_cast<std::uint64_t>(p)}),
                                              threads);
            const auto preds = predict_dataset(model, split.test);
            const double secs = std::chrono::duration<double>(clock::now() - t0).count();
            record("svm", p, split.test, preds, train_n, secs);
        }
        if (suite.nn) {
            const auto t0 = clock::now();
            optim::TrainConfig cfg = suite.nn->cfg;
            cfg.seed = derive_seed(seed, {0x4E4EULL, static_cast<std::uint64_t>(p)});
            const auto trained = nn::train_mlp(split.train, suite.nn->hidden_sizes, cfg);
            const auto preds = predict_dataset(trained.model, split.test);
            const double secs = std::chrono::duration<double>(clock::now() - t0).count();
            record("nn", p, split.test, preds, train_n, secs);
        }
        if (suite.cnn) {
            const auto t0 = clock::now();
            optim::TrainConfig cfg = suite.cnn->cfg;
            cfg.seed = derive_seed(seed, {0x434E4EULL, static_cast<std::uint64_t>(p)});
            const auto trained = cnn::train_cnn(split.train, suite.cnn->arch, cfg);
            const auto preds = predict_dataset(trained.model, split.test);
            const double secs = std::chrono::duration<double>(clock::now() - t0).count();
            record("cnn", p, split.test, preds, train_n, secs);
        }
    }
    return result;
}

std::string sweep_to_csv(const SweepResult& result) {
    std::string out = "classifier,patch_size,accuracy_pct,train_n,test_n,seed,seconds\n";
    char line[256];
    for (const auto& row : result.rows) {
        std::snprintf(line, sizeof(line), "%s,%d,%.6f,%d,%d,%llu,%.3f\n", row.classifier.c_str(),
                      row.patch_size, row.accuracy_pct, row.train_n, row.test_n,
                      static_cast<unsigned long long>(row.seed), row.seconds);
        out += line;
    }
    return out;
}

SweepResult sweep_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "classifier,patch_size,accuracy_pct,train_n,test_n,seed,seconds")
        throw DataError("sweep CSV missing expected header");
    SweepResult result;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        SweepRow row;
        char name[64];
        unsigned long long seed = 0;
        if (std::sscanf(line.c_str(), "%63[^,],%d,%lf,%d,%d,%llu,%lf", name, &row.patch_size,
                        &row.accuracy_pct, &row.train_n, &row.test_n, &seed, &row.seconds) != 7)
            throw DataError("bad sweep CSV row: " + line);
        row.classifier = name;
        row.seed = seed;
        result.rows.push_back(row);
    }
    return result;
}

std::string metrics_json(const std::string& classifier, int p, std::uint64_t seed,
                         const ConfusionMatrix& cm, int train_n, int test_n) {
    nlohmann::json j;
    j["classifier"] = classifier;
    j["p"] = p;
    j["seed"] = seed;
    j["overall_accuracy"] = overall_accuracy(cm);
    nlohmann::json rows = nlohmann::json::array();
    for (int t = 0; t < cm.k(); ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (int q = 0; q < cm.k(); ++q) row.push_back(cm.at(t, q));
        rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
    j["class_ids"] = cm.class_ids;
    j["train_size"] = train_n;
    j["test_size"] = test_n;
    return j.dump(2);
}

}  // namespace patchland::eval
