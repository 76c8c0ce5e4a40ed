// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.
// Usage: acceptance <configs-dir>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchland/cli.hpp"
#include "patchland/cnn.hpp"
#include "patchland/errors.hpp"
#include "patchland/eval.hpp"
#include "patchland/model.hpp"
#include "patchland/nn.hpp"
#include "patchland/raster.hpp"
#include "patchland/rng.hpp"
#include "patchland/svm.hpp"
#include "patchland/synth.hpp"
#include "oracles.hpp"

using namespace patchland;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why) {
        if (ok) detail = why;
        ok = false;
    }
    void expect(bool cond, const std::string& why) {
        if (!cond) fail(why);
    }
};

std::string fmt(const char* pattern, double value) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), pattern, value);
    return buf;
}

std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness (MLP + tiny CNN, 64-bit, <= 1e-4 relative)
// ---------------------------------------------------------------------------

// Central differences cross ReLU kinks and pooling argmax switches when a
// pre-activation or a window gap sits within the probe step, so sampled
// networks are redrawn until every unit is safely away from those boundaries.
constexpr double kKinkMargin = 1e-3;

bool mlp_well_conditioned(const nn::MlpCache<double>& cache) {
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (double v : cache.pre[l])
            if (std::abs(v) < kKinkMargin) return false;
    return true;
}

bool cnn_well_conditioned(const cnn::CnnCache<double>& cache) {
    for (const auto& pre : cache.conv_pre)
        for (double v : pre.v)
            if (std::abs(v) < kKinkMargin) return false;
    for (std::size_t l = 0; l + 1 < cache.fc_pre.size(); ++l)
        for (double v : cache.fc_pre[l])
            if (std::abs(v) < kKinkMargin) return false;
    for (int stage = 0; stage < 2; ++stage) {
        if (!cache.pooled[stage]) continue;
        const auto& post = cache.conv_post[stage];
        for (int orow = 0; orow + 1 < post.h; orow += 2) {
            for (int ocol = 0; ocol + 1 < post.w; ocol += 2) {
                for (int ch = 0; ch < post.c; ++ch) {
                    double top = -1e300, second = -1e300;
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc) {
                            const double v = post.at(orow + dr, ocol + dc, ch);
                            if (v > top) {
                                second = top;
                                top = v;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                    if (top > 0.0 && top - second < kKinkMargin) return false;
                }
            }
        }
    }
    return true;
}

Check criterion_gradients() {
    Check check;
    Rng rng(101);
    double worst = 0.0;

    for (int config = 0; config < 20; ++config) {
        std::vector<int> sizes;
        sizes.push_back(1 + static_cast<int>(rng.below(10)));
        const int hidden_layers = 1 + static_cast<int>(rng.below(3));
        for (int h = 0; h < hidden_layers; ++h) sizes.push_back(1 + static_cast<int>(rng.below(16)));
        sizes.push_back(2 + static_cast<int>(rng.below(5)));

        auto m = nn::init_mlp<double>(sizes, rng.next_u64());
        std::vector<double> x(sizes.front());
        for (int attempt = 0; attempt < 500; ++attempt) {
            for (auto& layer : m.weights)
                for (auto& w : layer) w = rng.uniform(-1.0, 1.0);
            for (auto& layer : m.biases)
                for (auto& b : layer) b = rng.uniform(-0.5, 0.5);
            for (auto& v : x) v = rng.uniform(-1.5, 1.5);
            if (mlp_well_conditioned(nn::mlp_forward(m, std::span<const double>(x)).second)) break;
        }
        const int target = static_cast<int>(rng.below(sizes.back()));

        const auto loss = [&]() {
            return nn::cross_entropy(nn::mlp_forward(m, std::span<const double>(x)).first, target);
        };
        const auto grads = nn::mlp_backward(m, nn::mlp_forward(m, std::span<const double>(x)).second,
                                            target);
        for (int l = 0; l < m.layer_count(); ++l) {
            for (std::size_t k = 0; k < m.weights[l].size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.weights[l][k]), grads.weights[l][k]));
            for (std::size_t k = 0; k < m.biases[l].size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.biases[l][k]), grads.biases[l][k]));
        }
    }

    for (int config = 0; config < 10; ++config) {
        cnn::CnnArch arch;
        arch.conv_filters = {2, 2};
        arch.fc_sizes = {1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(5))};
        const int bands = 1 + static_cast<int>(rng.below(3));
        const int classes = 2 + static_cast<int>(rng.below(3));
        std::vector<int> ids;
        for (int k = 0; k < classes; ++k) ids.push_back(k + 1);
        auto m = cnn::init_cnn<double>(7, bands, arch, ids, rng.next_u64());

        cnn::Tensor3<double> input(7, 7, bands);
        for (int attempt = 0; attempt < 500; ++attempt) {
            for (int layer = 0; layer < 2; ++layer) {
                for (auto& w : m.conv[layer].weights) w = rng.uniform(-1.0, 1.0);
                for (auto& b : m.conv[layer].biases) b = rng.uniform(-0.5, 0.5);
            }
            for (auto& w : m.fc_weights)
                for (auto& v : w) v = rng.uniform(-1.0, 1.0);
            for (auto& b : m.fc_biases)
                for (auto& v : b) v = rng.uniform(-0.5, 0.5);
            for (auto& v : input.v) v = rng.uniform(-1.0, 1.0);
            if (cnn_well_conditioned(cnn::cnn_forward(m, input).second)) break;
        }
        const int target = static_cast<int>(rng.below(classes));

        const auto loss = [&]() {
            const auto probs = cnn::cnn_forward(m, input).first;
            return -std::log(std::max(probs[target], 1e-12));
        };
        const auto grads = cnn::cnn_backward(m, cnn::cnn_forward(m, input).second, target);
        for (int layer = 0; layer < 2; ++layer) {
            for (std::size_t k = 0; k < m.conv[layer].weights.size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.conv[layer].weights[k]),
                    grads.conv_w[layer][k]));
            for (std::size_t k = 0; k < m.conv[layer].biases.size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.conv[layer].biases[k]),
                    grads.conv_b[layer][k]));
        }
        for (std::size_t l = 0; l < m.fc_weights.size(); ++l) {
            for (std::size_t k = 0; k < m.fc_weights[l].size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.fc_weights[l][k]), grads.fc_w[l][k]));
            for (std::size_t k = 0; k < m.fc_biases[l].size(); ++k)
                worst = std::max(worst, oracles::rel_error(
                    oracles::central_difference(loss, m.fc_biases[l][k]), grads.fc_b[l][k]));
        }
    }

    check.expect(worst <= 1e-4, "max relative gradient error " + fmt("%.3g", worst));
    if (check.ok) check.detail = "max relative error " + fmt("%.3g", worst);
    return check;
}

// ---------------------------------------------------------------------------
// 2. SMO optimality vs projected-gradient oracle + closed-form case
// ---------------------------------------------------------------------------

Check criterion_smo() {
    Check check;
    Rng rng(202);
    const double cs[] = {1.0, 10.0, 30.0};
    const double gammas[] = {0.3, 1.0, 3.0};

    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(7));
        const int d = 1 + static_cast<int>(rng.below(3));
        std::vector<std::vector<float>> X;
        std::vector<int> y;
        for (int i = 0; i < n; ++i) {
            std::vector<float> x(d);
            for (auto& v : x) v = static_cast<float>(rng.uniform(-2.0, 2.0));
            X.push_back(std::move(x));
            y.push_back(i < n / 2 ? -1 : +1);
        }
        y.front() = -1;
        y.back() = +1;

        svm::SvmHyperparams hp;
        hp.C = cs[trial % 3];
        hp.gamma = gammas[(trial / 3) % 3];
        hp.tol = 1e-6;  // tight solve; KKT asserted at the spec tolerance below
        const auto m = svm::train_binary_smo(X, y, hp, 4000 + trial);

        // reconstruct the alpha vector over the training set
        std::vector<double> alpha(X.size(), 0.0);
        std::vector<bool> used(m.support_vectors.size(), false);
        for (std::size_t i = 0; i < X.size(); ++i)
            for (std::size_t s = 0; s < m.support_vectors.size(); ++s)
                if (!used[s] && m.sv_labels[s] == y[i] && m.support_vectors[s] == X[i]) {
                    alpha[i] = m.alphas[s];
                    used[s] = true;
                    break;
                }

        std::vector<std::vector<double>> K(X.size(), std::vector<double>(X.size()));
        for (std::size_t i = 0; i < X.size(); ++i)
            for (std::size_t j = 0; j < X.size(); ++j)
                K[i][j] = svm::rbf_kernel(X[i], X[j], hp.gamma);

        const auto alpha_star = oracles::qp_projected_gradient(y, K, hp.C);
        const double oracle_obj = oracles::dual_objective(alpha_star, y, K);
        const double smo_obj = oracles::dual_objective(alpha, y, K);
        check.expect(smo_obj >= oracle_obj - 1e-6,
                     "dual gap " + fmt("%.3g", oracle_obj - smo_obj) + " at trial " +
                         std::to_string(trial));

        const double kkt_tol = 1e-3;
        double alpha_dot_y = 0.0;
        for (std::size_t i = 0; i < X.size(); ++i) {
            check.expect(alpha[i] >= 0.0 && alpha[i] <= hp.C + 1e-9, "alpha out of box");
            alpha_dot_y += alpha[i] * y[i];
            const double margin = y[i] * svm::decision(m, X[i]);
            if (alpha[i] <= 1e-12)
                check.expect(margin >= 1.0 - kkt_tol, "KKT lower violated: " + fmt("%.5f", margin));
            else if (alpha[i] >= hp.C - 1e-9)
                check.expect(margin <= 1.0 + kkt_tol, "KKT upper violated: " + fmt("%.5f", margin));
            else
                check.expect(std::abs(margin - 1.0) <= kkt_tol,
                             "KKT margin violated: " + fmt("%.5f", margin));
        }
        check.expect(std::abs(alpha_dot_y) <= 1e-6, "sum alpha*y = " + fmt("%.3g", alpha_dot_y));
    }

    // closed-form two-point case: C=10, gamma=0.3
    {
        svm::SvmHyperparams hp;
        hp.C = 10.0;
        hp.gamma = 0.3;
        const auto m = svm::train_binary_smo({{-1.f}, {1.f}}, {-1, +1}, hp, 1);
        const double expected = 1.0 / (1.0 - std::exp(-1.2));
        check.expect(m.alphas.size() == 2, "two support vectors expected");
        for (double a : m.alphas)
            check.expect(std::abs(a - expected) <= 1e-6,
                         "closed-form alpha " + fmt("%.7f", a) + " != " + fmt("%.7f", expected));
        check.expect(std::abs(m.bias) <= 1e-6, "closed-form bias " + fmt("%.3g", m.bias));
    }
    if (check.ok) check.detail = "50 random duals + closed-form case";
    return check;
}

// ---------------------------------------------------------------------------
// 3. Convolution / pooling oracle equivalence (200 random cases each)
// ---------------------------------------------------------------------------

Check criterion_conv_pool() {
    Check check;
    Rng rng(303);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int h = 1 + static_cast<int>(rng.below(10));
        const int w = 1 + static_cast<int>(rng.below(10));
        const int cin = 1 + static_cast<int>(rng.below(4));
        const int filters = 1 + static_cast<int>(rng.below(5));

        cnn::Tensor3<double> input(h, w, cin);
        for (auto& v : input.v) v = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
        cnn::ConvLayer<double> layer;
        layer.in_channels = cin;
        layer.filters = filters;
        layer.weights.resize(static_cast<std::size_t>(filters) * 25 * cin);
        for (auto& v : layer.weights) v = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
        layer.biases.resize(filters);
        for (auto& v : layer.biases) v = static_cast<double>(static_cast<float>(rng.uniform(-0.5, 0.5)));

        const auto got = cnn::conv2d_forward(input, layer);
        const auto expected = oracles::conv_same_relu(input, layer.weights, layer.biases, filters);
        for (std::size_t i = 0; i < got.size(); ++i)
            worst = std::max(worst, std::abs(got.v[i] - expected.v[i]));
    }
    check.expect(worst <= 1e-5, "conv deviation " + fmt("%.3g", worst));

    for (int trial = 0; trial < 200; ++trial) {
        const int h = 2 + static_cast<int>(rng.below(10));
        const int w = 2 + static_cast<int>(rng.below(10));
        const int c = 1 + static_cast<int>(rng.below(5));
        cnn::Tensor3<double> input(h, w, c);
        for (auto& v : input.v) v = rng.uniform(-2.0, 2.0);
        const auto got = cnn::maxpool_forward(input);
        const auto expected = oracles::maxpool(input);
        for (std::size_t i = 0; i < expected.size(); ++i)
            check.expect(got.output.v[i] == expected.v[i], "maxpool mismatch");
    }
    if (check.ok) check.detail = "200 conv + 200 pool cases, max conv deviation " + fmt("%.3g", worst);
    return check;
}

// ---------------------------------------------------------------------------
// 4. Patch extraction equals the brute-force window scan
// ---------------------------------------------------------------------------

Check criterion_patches() {
    Check check;
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = 8 + static_cast<int>(rng.below(12));
        const int cols = 8 + static_cast<int>(rng.below(12));
        const int bands = 1 + static_cast<int>(rng.below(3));
        raster::RasterCube cube{rows, cols, bands, {}};
        cube.values.resize(static_cast<std::size_t>(rows) * cols * bands);
        for (auto& v : cube.values) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        raster::LabelMap labels{rows, cols, {}};
        labels.labels.resize(static_cast<std::size_t>(rows) * cols, 0);
        for (auto& l : labels.labels)
            if (rng.unit() < 0.35) l = static_cast<std::uint16_t>(1 + rng.below(5));

        for (int p : {1, 3, 5, 7}) {
            for (bool mirror : {false, true}) {
                const auto expected = oracles::window_scan(cube, labels, p, mirror);
                const auto policy =
                    mirror ? raster::BorderPolicy::mirror : raster::BorderPolicy::skip;
                if (expected.empty()) {
                    try {
                        raster::extract_patches(cube, labels, {p, policy});
                        check.fail("expected zero-patch error");
                    } catch (const DataError&) {
                    }
                    continue;
                }
                const auto ds = raster::extract_patches(cube, labels, {p, policy});
                check.expect(ds.size() == expected.size(), "patch count mismatch");
                if (ds.size() != expected.size()) continue;
                for (std::size_t i = 0; i < expected.size(); ++i) {
                    check.expect(ds.source_coords[i] ==
                                     std::make_pair(expected[i].row, expected[i].col),
                                 "coordinate mismatch");
                    check.expect(ds.patches[i].center_label == expected[i].label, "label mismatch");
                    check.expect(ds.patches[i].values == expected[i].values, "value mismatch");
                }
            }
        }
    }
    if (check.ok) check.detail = "100 maps x p in {1,3,5,7} x both policies";
    return check;
}

// ---------------------------------------------------------------------------
// 5. End-to-end synthetic benchmark
// ---------------------------------------------------------------------------

Check criterion_benchmark() {
    Check check;
    synth::SceneSpec spec;
    spec.rows = 64;
    spec.cols = 64;
    spec.bands = 8;
    spec.class_count = 4;
    spec.field_count = 12;
    spec.noise_sigma = 0.05;
    spec.salt_pepper_rate = 0.15;
    spec.seed = 20240807;
    const auto scene = synth::generate_scene(spec);

    auto accuracy = [&](const cli::TrainSettings& settings) {
        const auto outcome = cli::train_on_scene(scene.cube, scene.labels, settings);
        return eval::overall_accuracy(outcome.cm);
    };

    cli::TrainSettings svm_patch;
    svm_patch.classifier = "svm";
    svm_patch.patch_size = 5;
    svm_patch.seed = 1;
    svm_patch.svm_hp = {10.0, 0.3, 1e-3, 200};
    const double acc_svm = accuracy(svm_patch);
    check.expect(acc_svm >= 90.0, "patch SVM accuracy " + fmt("%.2f", acc_svm) + "% < 90%");

    cli::TrainSettings nn_cfg;
    nn_cfg.classifier = "nn";
    nn_cfg.patch_size = 5;
    nn_cfg.seed = 1;
    nn_cfg.nn_hidden = {64, 32, 16};
    nn_cfg.nn_cfg.epochs = 150;  // <= 200
    nn_cfg.nn_cfg.batch_size = 64;
    nn_cfg.nn_cfg.learning_rate = 0.01;
    const double acc_nn = accuracy(nn_cfg);
    check.expect(acc_nn >= 90.0, "NN accuracy " + fmt("%.2f", acc_nn) + "% < 90%");

    cli::TrainSettings cnn_cfg;
    cnn_cfg.classifier = "cnn";
    cnn_cfg.patch_size = 5;
    cnn_cfg.seed = 1;
    cnn_cfg.cnn_arch.conv_filters = {8, 8};
    cnn_cfg.cnn_arch.fc_sizes = {200, 84};
    cnn_cfg.cnn_cfg.epochs = 120;  // <= 200
    cnn_cfg.cnn_cfg.batch_size = 64;
    cnn_cfg.cnn_cfg.learning_rate = 0.01;
    const double acc_cnn = accuracy(cnn_cfg);
    check.expect(acc_cnn >= 90.0, "CNN accuracy " + fmt("%.2f", acc_cnn) + "% < 90%");

    cli::TrainSettings svm_pixel = svm_patch;
    svm_pixel.patch_size = 1;
    const double acc_pixel = accuracy(svm_pixel);
    check.expect(acc_svm - acc_pixel >= 5.0,
                 "patch-vs-pixel gap " + fmt("%.2f", acc_svm - acc_pixel) + " < 5");

    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "svm %.2f%%, nn %.2f%%, cnn %.2f%%, pixel svm %.2f%% (gap %.2f)", acc_svm,
                  acc_nn, acc_cnn, acc_pixel, acc_svm - acc_pixel);
    if (check.ok) check.detail = detail;
    return check;
}

// ---------------------------------------------------------------------------
// 6. Sweep reproducibility through the CLI
// ---------------------------------------------------------------------------

Check criterion_sweep_reproducibility(const fs::path& work) {
    Check check;
    synth::SceneSpec spec;
    spec.rows = 32;
    spec.cols = 32;
    spec.bands = 4;
    spec.class_count = 3;
    spec.field_count = 7;
    spec.noise_sigma = 0.05;
    spec.salt_pepper_rate = 0.1;
    spec.seed = 99;
    const auto scene = synth::generate_scene(spec);
    raster::write_cube(work / "scene.cube1", scene.cube);
    raster::write_labels(work / "scene.lbl1", scene.labels);

    nlohmann::json cfg;
    cfg["cube"] = (work / "scene.cube1").string();
    cfg["labels"] = (work / "scene.lbl1").string();
    cfg["classifiers"] = {"svm", "nn", "cnn"};
    cfg["p_list"] = {1, 3, 5, 7};
    cfg["seed"] = 42;
    cfg["svm"] = {{"C", 10.0}, {"gamma", 0.3}};
    cfg["nn"] = {{"hidden_sizes", {16, 8}}, {"learning_rate", 0.05}, {"batch_size", 32},
                 {"epochs", 12}};
    cfg["cnn"] = {{"conv_filters", {6, 6}}, {"fc_sizes", {16, 8}}, {"learning_rate", 0.01},
                  {"batch_size", 32}, {"epochs", 8}};
    {
        std::ofstream out(work / "sweep.json");
        out << cfg.dump(2);
    }

    std::ostringstream sink;
    for (const char* dir : {"run1", "run2"}) {
        const int code = cli::run_cli({"sweep", "--config", (work / "sweep.json").string(), "--out",
                                       (work / dir).string()},
                                      sink, sink);
        check.expect(code == 0, std::string("sweep exited with code ") + std::to_string(code));
    }
    const auto csv1 = slurp(work / "run1" / "sweep.csv");
    const auto csv2 = slurp(work / "run2" / "sweep.csv");
    auto strip_seconds = [](const std::vector<char>& bytes) {
        std::istringstream in(std::string(bytes.begin(), bytes.end()));
        std::string line, out;
        while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
        return out;
    };
    check.expect(!csv1.empty(), "first sweep CSV is empty");
    check.expect(strip_seconds(csv1) == strip_seconds(csv2),
                 "sweep CSVs differ beyond the timing column");
    const auto parsed = eval::sweep_from_csv(std::string(csv1.begin(), csv1.end()));
    check.expect(parsed.rows.size() == 12, "expected 12 rows (3 classifiers x 4 patch sizes)");
    if (check.ok) check.detail = "12 rows byte-identical across reruns (timing excluded)";
    return check;
}

// ---------------------------------------------------------------------------
// 7. Format round-trips: cube1/lbl1, PPM, model JSON
// ---------------------------------------------------------------------------

Check criterion_formats(const fs::path& work) {
    Check check;
    Rng rng(707);

    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 1 + static_cast<int>(rng.below(8));
        const int cols = 1 + static_cast<int>(rng.below(8));
        const int bands = 1 + static_cast<int>(rng.below(5));
        raster::RasterCube cube{rows, cols, bands, {}};
        cube.values.resize(static_cast<std::size_t>(rows) * cols * bands);
        for (auto& v : cube.values) v = static_cast<float>(rng.uniform(-100.0, 100.0));
        const auto p1 = work / "rt_a.cube1";
        const auto p2 = work / "rt_b.cube1";
        raster::write_cube(p1, cube);
        raster::write_cube(p2, raster::load_cube(p1));
        check.expect(slurp(p1) == slurp(p2), "cube1 round-trip not byte-identical");

        raster::LabelMap map{rows, cols, {}};
        map.labels.resize(static_cast<std::size_t>(rows) * cols);
        for (auto& l : map.labels) l = static_cast<std::uint16_t>(rng.below(17));
        const auto l1 = work / "rt_a.lbl1";
        const auto l2 = work / "rt_b.lbl1";
        raster::write_labels(l1, map);
        raster::write_labels(l2, raster::load_labels(l1));
        check.expect(slurp(l1) == slurp(l2), "lbl1 round-trip not byte-identical");
    }

    for (int trial = 0; trial < 10; ++trial) {
        const int rows = 1 + static_cast<int>(rng.below(10));
        const int cols = 1 + static_cast<int>(rng.below(10));
        raster::LabelMap map{rows, cols, {}};
        map.labels.resize(static_cast<std::size_t>(rows) * cols);
        for (auto& l : map.labels) l = static_cast<std::uint16_t>(rng.below(6));
        const auto palette = eval::default_palette({1, 2, 3, 4, 5});
        const auto img = oracles::parse_ppm(eval::render_map(map, palette));
        check.expect(img.width == cols && img.height == rows, "PPM dims mismatch");
        for (std::size_t i = 0; i < map.labels.size(); ++i) {
            const auto& rgb = palette.colors.at(map.labels[i]);
            check.expect(img.rgb[i * 3] == rgb[0] && img.rgb[i * 3 + 1] == rgb[1] &&
                             img.rgb[i * 3 + 2] == rgb[2],
                         "PPM pixel color mismatch");
        }
    }

    // model JSON round-trips, bit-equal predictions on 100 random inputs each
    synth::SceneSpec spec;
    spec.rows = 24;
    spec.cols = 24;
    spec.bands = 3;
    spec.class_count = 3;
    spec.field_count = 6;
    spec.noise_sigma = 0.05;
    spec.salt_pepper_rate = 0.1;
    spec.seed = 5;
    const auto scene = synth::generate_scene(spec);
    for (const std::string classifier : {"svm", "nn", "cnn"}) {
        cli::TrainSettings settings;
        settings.classifier = classifier;
        settings.patch_size = 3;
        settings.seed = 3;
        settings.svm_hp = {10.0, 0.3, 1e-3, 200};
        settings.nn_hidden = {10, 6};
        settings.nn_cfg.epochs = 10;
        settings.nn_cfg.batch_size = 32;
        settings.nn_cfg.learning_rate = 0.05;
        settings.cnn_arch.conv_filters = {4, 4};
        settings.cnn_arch.fc_sizes = {10, 6};
        settings.cnn_cfg.epochs = 5;
        settings.cnn_cfg.batch_size = 32;
        settings.cnn_cfg.learning_rate = 0.01;
        const auto outcome = cli::train_on_scene(scene.cube, scene.labels, settings);

        const auto path = work / (classifier + "_model.json");
        save_model(path, outcome.model);
        const auto restored = load_model(path);
        check.expect(restored.classifier == classifier, "model kind lost in round-trip");
        const int d = outcome.model.feature_length();
        for (int probe = 0; probe < 100; ++probe) {
            std::vector<float> x(d);
            for (auto& v : x) v = static_cast<float>(rng.unit());
            check.expect(outcome.model.predict_window(x) == restored.predict_window(x),
                         classifier + " prediction changed after round-trip");
        }
    }
    if (check.ok) check.detail = "50 cube/lbl files, 10 PPMs, 3 model kinds x 100 probes";
    return check;
}

// ---------------------------------------------------------------------------
// 8. Table 1 parameter sets load and run one training step
// ---------------------------------------------------------------------------

Check criterion_table1_configs(const fs::path& configs_dir, const fs::path& work) {
    Check check;
    synth::SceneSpec spec;
    spec.rows = 24;
    spec.cols = 24;
    spec.bands = 4;
    spec.class_count = 3;
    spec.field_count = 6;
    spec.noise_sigma = 0.05;
    spec.salt_pepper_rate = 0.1;
    spec.seed = 8;
    const auto scene = synth::generate_scene(spec);
    raster::write_cube(work / "scene.cube1", scene.cube);
    raster::write_labels(work / "scene.lbl1", scene.labels);

    const char* names[] = {"etm_cnn", "etm_nn", "etm_svm",
                           "avirisng_cnn", "avirisng_nn", "avirisng_svm"};
    for (const char* name : names) {
        const fs::path src = configs_dir / (std::string(name) + ".json");
        if (!fs::exists(src)) {
            check.fail("missing config " + src.string());
            continue;
        }
        nlohmann::json cfg;
        {
            std::ifstream in(src);
            in >> cfg;
        }
        cfg["cube"] = (work / "scene.cube1").string();
        cfg["labels"] = (work / "scene.lbl1").string();
        cfg["model_out"] = (work / (std::string(name) + "_model.json")).string();
        cfg["metrics_out"] = (work / (std::string(name) + "_metrics.json")).string();
        // one training step is enough for the check
        if (cfg.contains("nn")) cfg["nn"]["epochs"] = 1;
        if (cfg.contains("cnn")) cfg["cnn"]["epochs"] = 1;
        const fs::path patched = work / (std::string(name) + "_run.json");
        {
            std::ofstream out(patched);
            out << cfg.dump(2);
        }
        std::ostringstream sink;
        const int code = cli::run_cli({"train", "--config", patched.string()}, sink, sink);
        check.expect(code == 0, std::string(name) + " exited with code " + std::to_string(code) +
                                    ": " + sink.str());
        check.expect(fs::exists(work / (std::string(name) + "_model.json")),
                     std::string(name) + " produced no model file");
    }
    if (check.ok) check.detail = "6 Table-1 parameter sets trained for one epoch";
    return check;
}

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;  // 0 = no limit
    std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const fs::path configs_dir = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
    const fs::path work =
        fs::temp_directory_path() / ("patchland_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(work);

    const std::vector<Criterion> criteria = {
        {1, "gradient correctness (MLP + tiny CNN, 64-bit)", 120.0, criterion_gradients},
        {2, "SMO optimality and KKT", 60.0, criterion_smo},
        {3, "conv/pool oracle equivalence", 60.0, criterion_conv_pool},
        {4, "patch extraction vs window-scan oracle", 60.0, criterion_patches},
        {5, "end-to-end synthetic benchmark", 600.0, criterion_benchmark},
        {6, "sweep reproducibility", 0.0, [&] { return criterion_sweep_reproducibility(work); }},
        {7, "format round-trips", 0.0, [&] { return criterion_formats(work); }},
        {8, "Table 1 configs load and run", 0.0,
         [&] { return criterion_table1_configs(configs_dir, work); }},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Check check;
        try {
            check = criterion.run();
        } catch (const std::exception& e) {
            check.fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (criterion.limit_seconds > 0.0 && secs > criterion.limit_seconds)
            check.fail("runtime " + fmt("%.1f", secs) + "s exceeds limit " +
                       fmt("%.0f", criterion.limit_seconds) + "s");
        std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", check.ok ? "PASS" : "FAIL",
                    criterion.id, criterion.name.c_str(), secs,
                    check.detail.empty() ? "" : " - ", check.detail.c_str());
        std::fflush(stdout);
        if (!check.ok) ++failures;
    }

    std::error_code ec;
    fs::remove_all(work, ec);
    if (failures > 0) std::printf("%d criterion(s) FAILED\n", failures);
    else std::printf("all 8 criteria passed\n");
    return failures;
}
