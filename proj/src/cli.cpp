#include "patchland/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "patchland/errors.hpp"
#include "patchland/rng.hpp"
#include "patchland/synth.hpp"

namespace patchland::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + " file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json parse_config_json(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + origin + " is not valid JSON: " + e.what());
    }
}

optim::TrainConfig train_config_from_json(const nlohmann::json& j) {
    optim::TrainConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.adagrad_epsilon = j.value("adagrad_epsilon", cfg.adagrad_epsilon);
    const std::string opt = j.value("optimizer", "adagrad");
    if (opt == "adagrad")
        cfg.optimizer = optim::Optimizer::adagrad;
    else if (opt == "sgd")
        cfg.optimizer = optim::Optimizer::sgd;
    else
        throw ConfigError("unknown optimizer '" + opt + "' (expected adagrad or sgd)");
    return cfg;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PATCHLAND_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--seed", [&flags](const CLI::results_t& res) {
        flags.seed = std::stoull(res[0]);
        return true;
    }, "Override the config seed");
    cmd->add_option("--threads", [&flags](const CLI::results_t& res) {
        flags.threads = std::stoi(res[0]);
        return true;
    }, "Worker thread count (env PATCHLAND_THREADS is the fallback)");
    cmd->add_option("--out", [&flags](const CLI::results_t& res) {
        flags.out_dir = res[0];
        return true;
    }, "Redirect output files into this directory");
}

fs::path redirect(const fs::path& original, const std::optional<std::string>& out_dir) {
    if (!out_dir) return original;
    return fs::path(*out_dir) / original.filename();
}

}  // namespace

TrainSettings train_settings_from_json_string(const std::string& text) {
    const nlohmann::json j = parse_config_json(text, "(inline)");
    TrainSettings s;
    try {
        s.classifier = j.value("classifier", s.classifier);
        if (s.classifier != "svm" && s.classifier != "nn" && s.classifier != "cnn")
            throw ConfigError("classifier must be svm, nn or cnn, got '" + s.classifier + "'");
        s.patch_size = j.value("patch_size", s.patch_size);
        s.train_fraction = j.value("train_fraction", s.train_fraction);
        if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
            throw ConfigError("train_fraction must lie strictly between 0 and 1");
        s.seed = j.value("seed", s.seed);
        s.threads = j.value("threads", s.threads);
        if (j.contains("svm")) {
            const auto& sj = j.at("svm");
            s.svm_hp.C = sj.value("C", s.svm_hp.C);
            s.svm_hp.gamma = sj.value("gamma", s.svm_hp.gamma);
            s.svm_hp.tol = sj.value("tol", s.svm_hp.tol);
            s.svm_hp.max_passes = sj.value("max_passes", s.svm_hp.max_passes);
        }
        if (j.contains("nn")) {
            const auto& nj = j.at("nn");
            s.nn_hidden = nj.value("hidden_sizes", s.nn_hidden);
            s.nn_cfg = train_config_from_json(nj);
        }
        if (j.contains("cnn")) {
            const auto& cj = j.at("cnn");
            s.cnn_arch.conv_filters = cj.value("conv_filters", s.cnn_arch.conv_filters);
            s.cnn_arch.fc_sizes = cj.value("fc_sizes", s.cnn_arch.fc_sizes);
            s.cnn_cfg = train_config_from_json(cj);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid train config: ") + e.what());
    }
    return s;
}

TrainOutcome train_on_scene(const raster::RasterCube& cube, const raster::LabelMap& labels,
                            const TrainSettings& settings) {
    const raster::PatchSpec spec{settings.patch_size, raster::BorderPolicy::skip};
    auto split = eval::prepare_split(cube, labels, spec, settings.train_fraction, settings.seed);
    const int threads = resolve_threads(settings.threads);

    TrainOutcome outcome;
    outcome.train_n = static_cast<int>(split.train.size());
    outcome.test_n = static_cast<int>(split.test.size());
    outcome.model.classifier = settings.classifier;
    outcome.model.patch_size = settings.patch_size;
    outcome.model.bands = cube.bands;
    outcome.model.stats = split.stats;

    std::vector<int> predictions;
    if (settings.classifier == "svm") {
        auto model = svm::train_ovo(
            split.train, settings.svm_hp,
            derive_seed(settings.seed, {0x53564DULL, static_cast<std::uint64_t>(settings.patch_size)}),
            threads);
        predictions = eval::predict_dataset(model, split.test);
        outcome.model.payload = std::move(model);
    } else if (settings.classifier == "nn") {
        optim::TrainConfig cfg = settings.nn_cfg;
        cfg.seed = derive_seed(settings.seed, {0x4E4EULL, static_cast<std::uint64_t>(settings.patch_size)});
        auto trained = nn::train_mlp(split.train, settings.nn_hidden, cfg);
        predictions = eval::predict_dataset(trained.model, split.test);
        outcome.model.payload = std::move(trained.model);
    } else {
        optim::TrainConfig cfg = settings.cnn_cfg;
        cfg.seed = derive_seed(settings.seed, {0x434E4EULL, static_cast<std::uint64_t>(settings.patch_size)});
        auto trained = cnn::train_cnn(split.train, settings.cnn_arch, cfg);
        predictions = eval::predict_dataset(trained.model, split.test);
        outcome.model.payload = std::move(trained.model);
    }

    std::vector<int> truth;
    truth.reserve(split.test.size());
    for (const auto& patch : split.test.patches) truth.push_back(patch.center_label);
    outcome.cm = eval::confusion(predictions, truth, split.test.class_ids);
    return outcome;
}

namespace {

int cmd_synth(const std::string& spec_path, const CommonFlags& flags, std::ostream& out) {
    auto spec = synth::scene_spec_from_json_string(read_text_file(spec_path, "scene spec"));
    if (flags.seed) spec.seed = *flags.seed;
    const auto scene = synth::generate_scene(spec);

    const fs::path dir = flags.out_dir.value_or(".");
    fs::create_directories(dir);
    raster::write_cube(dir / "scene.cube1", scene.cube);
    raster::write_labels(dir / "scene.lbl1", scene.labels);

    nlohmann::json sidecar = nlohmann::json::parse(synth::scene_spec_to_json_string(spec));
    nlohmann::json fields = nlohmann::json::array();
    std::map<int, int> area_per_class;
    for (const auto& f : scene.fields) {
        fields.push_back({{"row0", f.row0}, {"col0", f.col0}, {"rows", f.rows},
                          {"cols", f.cols}, {"class_id", f.class_id}});
        area_per_class[f.class_id] += f.area();
    }
    sidecar["placed_fields"] = std::move(fields);
    write_text_file(dir / "scene.json", sidecar.dump(2) + "\n");

    out << "scene " << spec.rows << "x" << spec.cols << "x" << spec.bands << ", "
        << scene.fields.size() << " fields placed\n";
    for (const auto& [class_id, area] : area_per_class)
        out << "  class " << class_id << ": " << area << " px\n";
    out << "wrote " << (dir / "scene.cube1").string() << ", " << (dir / "scene.lbl1").string()
        << ", " << (dir / "scene.json").string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
    const nlohmann::json j =
        parse_config_json(read_text_file(config_path, "train config"), config_path);
    TrainSettings settings = train_settings_from_json_string(j.dump());
    if (flags.seed) settings.seed = *flags.seed;
    if (flags.threads) settings.threads = *flags.threads;

    const fs::path cube_path = j.value("cube", "");
    const fs::path labels_path = j.value("labels", "");
    if (cube_path.empty() || labels_path.empty())
        throw ConfigError("train config must name 'cube' and 'labels' paths");
    const fs::path model_out = redirect(j.value("model_out", "model.json"), flags.out_dir);
    const fs::path metrics_out = redirect(j.value("metrics_out", "metrics.json"), flags.out_dir);

    const auto cube = raster::load_cube(cube_path);
    const auto labels = raster::load_labels(labels_path);

    const auto outcome = train_on_scene(cube, labels, settings);
    save_model(model_out, outcome.model);
    write_text_file(metrics_out,
                    eval::metrics_json(settings.classifier, settings.patch_size, settings.seed,
                                       outcome.cm, outcome.train_n, outcome.test_n) +
                        "\n");

    char line[160];
    std::snprintf(line, sizeof(line), "%s p=%d: test accuracy %.4f%% (train %d, test %d)\n",
                  settings.classifier.c_str(), settings.patch_size,
                  eval::overall_accuracy(outcome.cm), outcome.train_n, outcome.test_n);
    out << line << "model: " << model_out.string() << "\nmetrics: " << metrics_out.string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& cube_path,
                 const std::string& labels_path, double fraction,
                 const std::string& metrics_out, const CommonFlags& flags, std::ostream& out) {
    const auto model = load_model(model_path);
    const auto cube = raster::load_cube(cube_path);
    const auto labels = raster::load_labels(labels_path);
    if (cube.bands != model.bands)
        throw DataError("cube has " + std::to_string(cube.bands) + " bands but model expects " +
                        std::to_string(model.bands));

    const std::uint64_t seed = flags.seed.value_or(0);
    const raster::PatchSpec spec{model.patch_size, raster::BorderPolicy::skip};
    const auto ds = raster::extract_patches(cube, labels, spec);
    auto [train, test] = raster::split_dataset(ds, fraction, eval::split_seed(seed, model.patch_size));
    raster::normalize_patches(test, model.stats);

    std::vector<int> predictions, truth;
    predictions.reserve(test.size());
    truth.reserve(test.size());
    for (const auto& patch : test.patches) {
        predictions.push_back(model.predict_window(patch.values));
        truth.push_back(patch.center_label);
    }
    const auto cm = eval::confusion(predictions, truth, test.class_ids);
    const std::string metrics = eval::metrics_json(model.classifier, model.patch_size, seed, cm,
                                                   static_cast<int>(train.size()),
                                                   static_cast<int>(test.size()));
    if (!metrics_out.empty()) write_text_file(metrics_out, metrics + "\n");

    char line[128];
    std::snprintf(line, sizeof(line), "%s p=%d: test accuracy %.4f%% (%zu samples)\n",
                  model.classifier.c_str(), model.patch_size, eval::overall_accuracy(cm),
                  test.size());
    out << line;
    return 0;
}

int cmd_classify(const std::string& model_path, const std::string& cube_path,
                 const std::string& palette_path, const CommonFlags& flags, std::ostream& out) {
    const auto model = load_model(model_path);
    const auto cube = raster::load_cube(cube_path);
    const int threads = resolve_threads(flags.threads.value_or(0));

    const auto map = classify_scene_with_model(cube, model, threads);
    const auto palette = palette_path.empty() ? eval::default_palette(model.class_ids())
                                              : eval::palette_from_csv(palette_path);
    const auto image = eval::render_map(map, palette);

    const fs::path dir = flags.out_dir.value_or(".");
    fs::create_directories(dir);
    const fs::path map_path = dir / "classified.lbl1";
    const fs::path image_path = dir / "classified.ppm";
    raster::write_labels(map_path, map);
    std::ofstream img(image_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + image_path.string() + " for writing");
    img.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
    if (!img) throw DataError("write failed for " + image_path.string());

    out << "classified " << cube.rows << "x" << cube.cols << " scene with " << model.classifier
        << " (p=" << model.patch_size << ")\nmap: " << map_path.string()
        << "\nimage: " << image_path.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
    const nlohmann::json j =
        parse_config_json(read_text_file(config_path, "sweep config"), config_path);
    TrainSettings base = train_settings_from_json_string(j.dump());
    if (flags.seed) base.seed = *flags.seed;
    if (flags.threads) base.threads = *flags.threads;

    const fs::path cube_path = j.value("cube", "");
    const fs::path labels_path = j.value("labels", "");
    if (cube_path.empty() || labels_path.empty())
        throw ConfigError("sweep config must name 'cube' and 'labels' paths");
    const std::vector<int> p_list = j.value("p_list", std::vector<int>{});
    if (p_list.empty()) throw ConfigError("sweep config must provide a non-empty 'p_list'");
    const std::vector<std::string> classifiers =
        j.value("classifiers", std::vector<std::string>{"svm", "nn", "cnn"});

    eval::ClassifierSuite suite;
    for (const auto& name : classifiers) {
        if (name == "svm")
            suite.svm = eval::SvmSettings{base.svm_hp};
        else if (name == "nn")
            suite.nn = eval::NnSettings{base.nn_hidden, base.nn_cfg};
        else if (name == "cnn")
            suite.cnn = eval::CnnSettings{base.cnn_arch, base.cnn_cfg};
        else
            throw ConfigError("unknown classifier '" + name + "' in sweep config");
    }

    const fs::path dir = flags.out_dir.value_or(j.value("out_dir", "."));
    fs::create_directories(dir);
    const fs::path csv_path = dir / "sweep.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot open " + csv_path.string() + " for writing");
    csv << "classifier,patch_size,accuracy_pct,train_n,test_n,seed,seconds\n" << std::flush;

    const auto cube = raster::load_cube(cube_path);
    const auto labels = raster::load_labels(labels_path);
    const int threads = resolve_threads(base.threads);

    // Rows are flushed as they finish so partial results survive an abort.
    auto on_row = [&](const eval::SweepRow& row) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%d,%.6f,%d,%d,%llu,%.3f\n", row.classifier.c_str(),
                      row.patch_size, row.accuracy_pct, row.train_n, row.test_n,
                      static_cast<unsigned long long>(row.seed), row.seconds);
        csv << line << std::flush;
        out << line;
    };

    const auto result = eval::sweep_patch_sizes(cube, labels, suite, p_list, base.seed,
                                                base.train_fraction, threads, on_row);

    // Per-run metrics for each finished row.
    for (const auto& row : result.rows) {
        char name[64];
        std::snprintf(name, sizeof(name), "metrics_%s_p%d.json", row.classifier.c_str(),
                      row.patch_size);
        nlohmann::json m;
        m["classifier"] = row.classifier;
        m["p"] = row.patch_size;
        m["seed"] = row.seed;
        m["overall_accuracy"] = row.accuracy_pct;
        m["train_size"] = row.train_n;
        m["test_size"] = row.test_n;
        write_text_file(dir / name, m.dump(2) + "\n");
    }
    out << "sweep CSV: " << csv_path.string() << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"patchland: patch-based land cover classification toolkit"};
    app.require_subcommand(1);

    std::string spec_path, config_path, model_path, cube_path, labels_path;
    std::string palette_path, metrics_out;
    double fraction = 0.75;
    CommonFlags synth_flags, train_flags, eval_flags, classify_flags, sweep_flags;

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labeled scene");
    synth_cmd->add_option("--spec", spec_path, "Scene spec JSON")->required();
    add_common_flags(synth_cmd, synth_flags);

    auto* train_cmd = app.add_subcommand("train", "Train a classifier from a config file");
    train_cmd->add_option("--config", config_path, "Run config JSON")->required();
    add_common_flags(train_cmd, train_flags);

    auto* eval_cmd = app.add_subcommand("evaluate", "Score a trained model on a labeled scene");
    eval_cmd->add_option("--model", model_path, "Trained model JSON")->required();
    eval_cmd->add_option("--cube", cube_path, "Scene cube (cube1)")->required();
    eval_cmd->add_option("--labels", labels_path, "Ground reference (lbl1)")->required();
    eval_cmd->add_option("--fraction", fraction, "Train fraction used to reproduce the split");
    eval_cmd->add_option("--metrics-out", metrics_out, "Metrics JSON output path");
    add_common_flags(eval_cmd, eval_flags);

    auto* classify_cmd = app.add_subcommand("classify", "Render a full-scene classified map");
    classify_cmd->add_option("--model", model_path, "Trained model JSON")->required();
    classify_cmd->add_option("--cube", cube_path, "Scene cube (cube1)")->required();
    classify_cmd->add_option("--palette", palette_path, "Palette CSV (class_id,r,g,b)");
    add_common_flags(classify_cmd, classify_flags);

    auto* sweep_cmd = app.add_subcommand("sweep", "Patch-size sweep across classifiers");
    sweep_cmd->add_option("--config", config_path, "Sweep config JSON")->required();
    add_common_flags(sweep_cmd, sweep_flags);

    std::vector<std::string> argv_storage = args;
    std::vector<const char*> argv;
    argv.push_back("patchland");
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(spec_path, synth_flags, out);
        if (train_cmd->parsed()) return cmd_train(config_path, train_flags, out);
        if (eval_cmd->parsed())
            return cmd_evaluate(model_path, cube_path, labels_path, fraction, metrics_out,
                                eval_flags, out);
        if (classify_cmd->parsed()) return cmd_classify(model_path, cube_path, palette_path,
                                                        classify_flags, out);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path, sweep_flags, out);
        err << "usage error: no subcommand given\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace patchland::cli
