#include "patchland/svm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "patchland/errors.hpp"
#include "patchland/rng.hpp"

namespace patchland::svm {

double rbf_kernel(std::span<const float> x, std::span<const float> y, double gamma) {
    if (x.size() != y.size()) throw DataError("rbf_kernel: feature length mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

namespace {

// Platt-style SMO working state over a precomputed Gram matrix.
struct SmoSolver {
    const std::vector<std::vector<float>>& X;
    const std::vector<int>& y;
    double C, gamma, tol;
    std::size_t n;
    std::vector<double> gram;   // n x n
    std::vector<double> alpha;
    std::vector<double> error;  // f(x_i) - y_i, kept exact incrementally
    double b = 0.0;
    Rng rng;

    static constexpr double kStepEps = 1e-12;

    SmoSolver(const std::vector<std::vector<float>>& X_, const std::vector<int>& y_,
              const SvmHyperparams& hp, std::uint64_t seed)
        : X(X_), y(y_), C(hp.C), gamma(hp.gamma), tol(hp.tol), n(X_.size()), rng(seed) {
        gram.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            gram[i * n + i] = 1.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double k = rbf_kernel(X[i], X[j], gamma);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }
        alpha.assign(n, 0.0);
        error.resize(n);
        for (std::size_t i = 0; i < n; ++i) error[i] = -static_cast<double>(y[i]);
    }

    double k(std::size_t i, std::size_t j) const { return gram[i * n + j]; }

    // The constraint-line arithmetic can leave an alpha a few ulps inside its
    // bound; classify bounds with a tolerance so such points are not mistaken
    // for on-margin vectors.
    double bound_eps() const { return 1e-9 * std::max(1.0, C); }
    bool at_lower(double a) const { return a <= bound_eps(); }
    bool at_upper(double a) const { return a >= C - bound_eps(); }
    bool non_bound_value(double a) const { return !at_lower(a) && !at_upper(a); }
    bool non_bound(std::size_t i) const { return non_bound_value(alpha[i]); }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        const double a1 = alpha[i1], a2 = alpha[i2];
        const double y1 = y[i1], y2 = y[i2];
        const double e1 = error[i1], e2 = error[i2];
        const double s = y1 * y2;

        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(C, C + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - C);
            hi = std::min(C, a1 + a2);
        }
        if (lo >= hi) return false;

        const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;
        double a2_new;
        if (eta > 0.0) {
            a2_new = a2 + y2 * (e1 - e2) / eta;
            a2_new = std::clamp(a2_new, lo, hi);
        } else {
            // Objective is linear along the constraint line; compare endpoints.
            // y_i * (e_i - b) is the bias-free output minus the label.
            const double f1 = y1 * (e1 - b) - a1 * k11 - s * a2 * k12;
            const double f2 = y2 * (e2 - b) - a2 * k22 - s * a1 * k12;
            const double l1 = a1 + s * (a2 - lo);
            const double h1 = a1 + s * (a2 - hi);
            const double psi_l =
                l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            const double psi_h =
                h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if (psi_l < psi_h - kStepEps)
                a2_new = lo;
            else if (psi_l > psi_h + kStepEps)
                a2_new = hi;
            else
                return false;
        }
        if (std::abs(a2_new - a2) < kStepEps * (a2_new + a2 + kStepEps)) return false;

        double a1_new = a1 + s * (a2 - a2_new);
        if (a1_new < 0.0) {
            a2_new += s * a1_new;
            a1_new = 0.0;
        } else if (a1_new > C) {
            a2_new += s * (a1_new - C);
            a1_new = C;
        }

        const double d1 = a1_new - a1;
        const double d2 = a2_new - a2;
        const double b1 = b - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        const double b2 = b - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        double b_new;
        if (non_bound_value(a1_new))
            b_new = b1;
        else if (non_bound_value(a2_new))
            b_new = b2;
        else
            b_new = 0.5 * (b1 + b2);

        const double db = b_new - b;
        for (std::size_t i = 0; i < n; ++i)
            error[i] += y1 * d1 * k(i1, i) + y2 * d2 * k(i2, i) + db;

        alpha[i1] = a1_new;
        alpha[i2] = a2_new;
        b = b_new;
        return true;
    }

    bool examine(std::size_t i2) {
        const double y2 = y[i2];
        const double a2 = alpha[i2];
        const double r2 = error[i2] * y2;
        if (!((r2 < -tol && a2 < C) || (r2 > tol && a2 > 0.0))) return false;

        // Second-choice heuristic: maximal |E1 - E2| over non-bound points.
        std::size_t best = n;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == i2 || !non_bound(i)) continue;
            const double gap = std::abs(error[i] - error[i2]);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best < n && take_step(best, i2)) return true;

        const std::size_t start1 = static_cast<std::size_t>(rng.below(n));
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t i = (start1 + off) % n;
            if (i == i2 || !non_bound(i)) continue;
            if (take_step(i, i2)) return true;
        }
        const std::size_t start2 = static_cast<std::size_t>(rng.below(n));
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t i = (start2 + off) % n;
            if (i == i2) continue;
            if (take_step(i, i2)) return true;
        }
        return false;
    }

    bool solve(int max_passes) {
        bool examine_all = true;
        int changed = 0;
        int sweeps = 0;
        while (changed > 0 || examine_all) {
            if (++sweeps > max_passes) return false;
            changed = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!examine_all && !non_bound(i)) continue;
                if (examine(i)) ++changed;
            }
            if (examine_all)
                examine_all = false;
            else if (changed == 0)
                examine_all = true;
        }
        return true;
    }

    // Bias from KKT: average over on-margin vectors, midpoint rule otherwise.
    double final_bias() const {
        std::vector<double> raw(n, 0.0);  // f(x_i) without bias
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (alpha[j] > 0.0) s += alpha[j] * y[j] * k(j, i);
            raw[i] = s;
        }
        double sum = 0.0;
        int count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (non_bound(i)) {
                sum += static_cast<double>(y[i]) - raw[i];
                ++count;
            }
        }
        if (count > 0) return sum / count;

        double b_lo = -std::numeric_limits<double>::infinity();
        double b_hi = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            // y_i (raw_i + b) >= 1 for alpha=0, <= 1 for alpha=C.
            const double edge = static_cast<double>(y[i]) - raw[i];
            const bool wants_ge = (at_lower(alpha[i]) && y[i] > 0) || (at_upper(alpha[i]) && y[i] < 0);
            if (wants_ge)
                b_lo = std::max(b_lo, edge);
            else
                b_hi = std::min(b_hi, edge);
        }
        if (std::isinf(b_lo)) return b_hi;
        if (std::isinf(b_hi)) return b_lo;
        return 0.5 * (b_lo + b_hi);
    }
};

}  // namespace

BinarySvm train_binary_smo(const std::vector<std::vector<float>>& X, const std::vector<int>& y,
                           const SvmHyperparams& hp, std::uint64_t seed) {
    if (X.size() != y.size() || X.empty()) throw DataError("SMO: empty or mismatched training data");
    if (!(hp.C > 0.0) || !(hp.gamma > 0.0) || !(hp.tol > 0.0))
        throw ConfigError("SMO: C, gamma and tol must be positive");
    bool has_pos = false, has_neg = false;
    const std::size_t feature_len = X[0].size();
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].size() != feature_len) throw DataError("SMO: inconsistent feature lengths");
        if (y[i] == 1) has_pos = true;
        else if (y[i] == -1) has_neg = true;
        else throw DataError("SMO: labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) throw DataError("SMO: need at least one example of each sign");

    SmoSolver solver(X, y, hp, seed);
    const bool converged = solver.solve(hp.max_passes);

    BinarySvm m;
    m.gamma = hp.gamma;
    m.converged = converged;
    m.bias = solver.final_bias();
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (solver.at_lower(solver.alpha[i])) continue;  // prune zero-alpha vectors
        m.support_vectors.push_back(X[i]);
        m.alphas.push_back(solver.at_upper(solver.alpha[i]) ? hp.C : solver.alpha[i]);
        m.sv_labels.push_back(y[i]);
    }
    return m;
}

double decision(const BinarySvm& m, std::span<const float> x) {
    double sum = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
        sum += m.alphas[i] * m.sv_labels[i] * rbf_kernel(m.support_vectors[i], x, m.gamma);
    return sum;
}

SvmModel train_ovo(const std::vector<std::vector<float>>& X, const std::vector<int>& labels,
                   const SvmHyperparams& hp, std::uint64_t seed, int threads) {
    if (X.size() != labels.size() || X.empty()) throw DataError("train_ovo: empty or mismatched data");
    std::set<int> ids(labels.begin(), labels.end());
    if (ids.size() < 2) throw DataError("train_ovo: need at least 2 classes");

    SvmModel model;
    model.class_ids.assign(ids.begin(), ids.end());
    model.feature_length = static_cast<int>(X[0].size());

    for (std::size_t i = 0; i + 1 < model.class_ids.size(); ++i)
        for (std::size_t j = i + 1; j < model.class_ids.size(); ++j)
            model.machines.push_back({model.class_ids[i], model.class_ids[j], {}});

    auto train_pair = [&](PairMachine& pm) {
        std::vector<std::vector<float>> Xp;
        std::vector<int> yp;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (labels[i] == pm.class_a) {
                Xp.push_back(X[i]);
                yp.push_back(-1);
            } else if (labels[i] == pm.class_b) {
                Xp.push_back(X[i]);
                yp.push_back(+1);
            }
        }
        const std::uint64_t pair_seed = derive_seed(
            seed, {static_cast<std::uint64_t>(pm.class_a), static_cast<std::uint64_t>(pm.class_b)});
        pm.machine = train_binary_smo(Xp, yp, hp, pair_seed);
    };

    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(model.machines.size())));
    if (workers == 1) {
        for (auto& pm : model.machines) train_pair(pm);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex err_mutex;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= model.machines.size()) return;
                    try {
                        train_pair(model.machines[i]);
                    } catch (...) {
                        std::lock_guard lock(err_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return model;
}

SvmModel train_ovo(const raster::PatchDataset& ds, const SvmHyperparams& hp, std::uint64_t seed,
                   int threads) {
    std::vector<std::vector<float>> X;
    std::vector<int> labels;
    X.reserve(ds.patches.size());
    labels.reserve(ds.patches.size());
    for (const auto& patch : ds.patches) {
        X.push_back(raster::flatten_patch(patch));
        labels.push_back(patch.center_label);
    }
    return train_ovo(X, labels, hp, seed, threads);
}

int predict(const SvmModel& model, std::span<const float> x) {
    if (static_cast<int>(x.size()) != model.feature_length)
        throw DataError("predict: feature length mismatch");

    std::map<int, int> votes;
    std::map<int, double> magnitude;
    for (int id : model.class_ids) {
        votes[id] = 0;
        magnitude[id] = 0.0;
    }
    for (const auto& pm : model.machines) {
        const double d = decision(pm.machine, x);
        // Zero counts for the +1-mapped (higher-id) class.
        votes[d >= 0.0 ? pm.class_b : pm.class_a] += 1;
        magnitude[pm.class_a] += std::abs(d);
        magnitude[pm.class_b] += std::abs(d);
    }

    int best = model.class_ids.front();
    for (int id : model.class_ids) {
        if (votes[id] > votes[best]) best = id;
    }
    // Resolve ties by summed |decision| over each tied class's machines,
    // then by lowest class id (ids are iterated in ascending order).
    for (int id : model.class_ids) {
        if (id == best) continue;
        if (votes[id] == votes[best] && magnitude[id] > magnitude[best]) best = id;
    }
    return best;
}

std::string to_json_string(const SvmModel& model) {
    nlohmann::json j;
    j["class_ids"] = model.class_ids;
    j["feature_length"] = model.feature_length;
    nlohmann::json machines = nlohmann::json::array();
    for (const auto& pm : model.machines) {
        nlohmann::json m;
        m["pair"] = {pm.class_a, pm.class_b};
        m["alphas"] = pm.machine.alphas;
        m["sv_labels"] = pm.machine.sv_labels;
        m["bias"] = pm.machine.bias;
        m["gamma"] = pm.machine.gamma;
        m["converged"] = pm.machine.converged;
        nlohmann::json svs = nlohmann::json::array();
        for (const auto& sv : pm.machine.support_vectors) {
            nlohmann::json row = nlohmann::json::array();
            for (float v : sv) row.push_back(static_cast<double>(v));
            svs.push_back(std::move(row));
        }
        m["support_vectors"] = std::move(svs);
        machines.push_back(std::move(m));
    }
    j["machines"] = std::move(machines);
    return j.dump();
}

SvmModel svm_from_json_string(const std::string& text) {
    SvmModel model;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        model.class_ids = j.at("class_ids").get<std::vector<int>>();
        model.feature_length = j.at("feature_length").get<int>();
        for (const auto& m : j.at("machines")) {
            PairMachine pm;
            pm.class_a = m.at("pair").at(0).get<int>();
            pm.class_b = m.at("pair").at(1).get<int>();
            pm.machine.alphas = m.at("alphas").get<std::vector<double>>();
            pm.machine.sv_labels = m.at("sv_labels").get<std::vector<int>>();
            pm.machine.bias = m.at("bias").get<double>();
            pm.machine.gamma = m.at("gamma").get<double>();
            pm.machine.converged = m.value("converged", true);
            for (const auto& row : m.at("support_vectors")) {
                std::vector<float> sv;
                for (const auto& v : row) sv.push_back(static_cast<float>(v.get<double>()));
                pm.machine.support_vectors.push_back(std::move(sv));
            }
            model.machines.push_back(std::move(pm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed SVM model JSON: ") + e.what());
    }
    return model;
}

}  // namespace patchland::svm
