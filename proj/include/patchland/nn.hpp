#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchland/errors.hpp"
#include "patchland/optim.hpp"
#include "patchland/raster.hpp"
#include "patchland/rng.hpp"

namespace patchland::nn {

/// Fully connected network: affine + ReLU per hidden layer, softmax output.
/// Parameters are Scalar (float in production, double for gradient checks);
/// all arithmetic runs in double.
template <typename Scalar>
struct Mlp {
    std::vector<int> layer_sizes;              // input, hidden..., output K
    std::vector<std::vector<Scalar>> weights;  // per layer, row-major (out x in)
    std::vector<std::vector<Scalar>> biases;   // per layer, length out
    std::vector<int> class_ids;                // sorted; output unit i scores class_ids[i]

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(weights.size()); }
};

template <typename Scalar>
struct MlpGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

template <typename Scalar>
struct MlpCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // affine outputs per layer
    std::vector<std::vector<double>> post;  // activations per layer (softmax at the end)
};

inline std::vector<double> relu(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    return out;
}

/// Max-subtracted softmax; shift-invariant, outputs sum to 1.
inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw DataError("softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline double cross_entropy(std::span<const double> probs, int true_class) {
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= probs.size())
        throw DataError("cross_entropy: class index out of range");
    return -std::log(std::max(probs[true_class], 1e-12));
}

/// He-uniform weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
template <typename Scalar>
Mlp<Scalar> init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed,
                     std::vector<int> class_ids = {}) {
    if (layer_sizes.size() < 2) throw ConfigError("init_mlp: need at least input and output layers");
    for (int s : layer_sizes)
        if (s <= 0) throw ConfigError("init_mlp: every layer size must be positive");

    Mlp<Scalar> m;
    m.layer_sizes = layer_sizes;
    m.class_ids = std::move(class_ids);
    Rng rng(derive_seed(seed, {0x4D4C50ULL}));
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / fan_in);
        std::vector<Scalar> w(static_cast<std::size_t>(fan_out) * fan_in);
        for (auto& v : w) v = static_cast<Scalar>(rng.uniform(-bound, bound));
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(static_cast<std::size_t>(fan_out), Scalar(0));
    }
    return m;
}

template <typename Scalar>
std::pair<std::vector<double>, MlpCache<Scalar>> mlp_forward(const Mlp<Scalar>& m,
                                                             std::span<const Scalar> x) {
    if (static_cast<int>(x.size()) != m.input_size())
        throw DataError("mlp_forward: input length mismatch");

    MlpCache<Scalar> cache;
    cache.input.assign(x.begin(), x.end());
    std::vector<double> act = cache.input;
    for (int l = 0; l < m.layer_count(); ++l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        std::vector<double> z(out);
        const Scalar* w = m.weights[l].data();
        for (int o = 0; o < out; ++o) {
            double sum = static_cast<double>(m.biases[l][o]);
            const Scalar* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) sum += static_cast<double>(row[i]) * act[i];
            z[o] = sum;
        }
        cache.pre.push_back(z);
        act = (l + 1 == m.layer_count()) ? softmax(z) : relu(z);
        cache.post.push_back(act);
    }
    return {act, std::move(cache)};
}

/// Exact gradients of cross-entropy(softmax(network)); output delta is
/// probs - onehot(true_class). ReLU subgradient at 0 is 0.
template <typename Scalar>
MlpGrads<Scalar> mlp_backward(const Mlp<Scalar>& m, const MlpCache<Scalar>& cache, int true_class) {
    const int L = m.layer_count();
    MlpGrads<Scalar> g;
    g.weights.resize(L);
    g.biases.resize(L);

    std::vector<double> delta = cache.post.back();
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= delta.size())
        throw DataError("mlp_backward: class index out of range");
    delta[true_class] -= 1.0;

    for (int l = L - 1; l >= 0; --l) {
        const int in = m.layer_sizes[l];
        const int out = m.layer_sizes[l + 1];
        const std::vector<double>& prev = (l == 0) ? cache.input : cache.post[l - 1];
        g.weights[l].assign(static_cast<std::size_t>(out) * in, 0.0);
        g.biases[l].assign(out, 0.0);
        for (int o = 0; o < out; ++o) {
            g.biases[l][o] = delta[o];
            double* row = g.weights[l].data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) row[i] = delta[o] * prev[i];
        }
        if (l == 0) break;
        std::vector<double> next(in, 0.0);
        const Scalar* w = m.weights[l].data();
        for (int o = 0; o < out; ++o) {
            const Scalar* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) next[i] += static_cast<double>(row[i]) * delta[o];
        }
        for (int i = 0; i < in; ++i)
            if (cache.pre[l - 1][i] <= 0.0) next[i] = 0.0;
        delta = std::move(next);
    }
    return g;
}

template <typename Scalar>
int mlp_predict(const Mlp<Scalar>& m, std::span<const Scalar> x) {
    const auto [probs, cache] = mlp_forward(m, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return m.class_ids.empty() ? static_cast<int>(best) : m.class_ids[best];
}

template <typename Scalar>
struct MlpTrainResult {
    Mlp<Scalar> model;
    std::vector<double> loss_trace;  // mean cross-entropy per epoch
};

namespace detail {

template <typename Scalar>
struct ParamBuffers {
    std::vector<std::vector<double>> grads_w, grads_b;   // batch accumulators
    std::vector<std::vector<double>> accum_w, accum_b;   // adagrad state

    explicit ParamBuffers(const Mlp<Scalar>& m) {
        for (int l = 0; l < m.layer_count(); ++l) {
            grads_w.emplace_back(m.weights[l].size(), 0.0);
            grads_b.emplace_back(m.biases[l].size(), 0.0);
            accum_w.emplace_back(m.weights[l].size(), 0.0);
            accum_b.emplace_back(m.biases[l].size(), 0.0);
        }
    }
    void zero_grads() {
        for (auto& v : grads_w) std::fill(v.begin(), v.end(), 0.0);
        for (auto& v : grads_b) std::fill(v.begin(), v.end(), 0.0);
    }
};

}  // namespace detail

/// Mini-batch backprop with a seeded shuffle per epoch. The last batch may be
/// short; gradients are averaged over the actual batch length.
template <typename Scalar>
MlpTrainResult<Scalar> train_mlp(const std::vector<std::vector<Scalar>>& X,
                                 const std::vector<int>& class_indices,
                                 const std::vector<int>& class_ids,
                                 const std::vector<int>& hidden_sizes,
                                 const optim::TrainConfig& cfg) {
    if (X.empty() || X.size() != class_indices.size())
        throw DataError("train_mlp: empty or mismatched training data");
    if (class_ids.size() < 2) throw DataError("train_mlp: need at least 2 classes");
    if (cfg.epochs < 1) throw ConfigError("train_mlp: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train_mlp: batch size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train_mlp: learning rate must be positive");

    std::vector<int> layer_sizes;
    layer_sizes.push_back(static_cast<int>(X[0].size()));
    layer_sizes.insert(layer_sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    layer_sizes.push_back(static_cast<int>(class_ids.size()));

    MlpTrainResult<Scalar> result;
    result.model = init_mlp<Scalar>(layer_sizes, cfg.seed, class_ids);
    Mlp<Scalar>& m = result.model;
    detail::ParamBuffers<Scalar> buf(m);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x53485546ULL}));

    std::vector<std::size_t> order(X.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            buf.zero_grads();
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t i = order[s];
                auto [probs, cache] = mlp_forward(m, std::span<const Scalar>(X[i]));
                epoch_loss += cross_entropy(probs, class_indices[i]);
                const auto g = mlp_backward(m, cache, class_indices[i]);
                for (int l = 0; l < m.layer_count(); ++l) {
                    for (std::size_t k = 0; k < g.weights[l].size(); ++k)
                        buf.grads_w[l][k] += g.weights[l][k] * inv;
                    for (std::size_t k = 0; k < g.biases[l].size(); ++k)
                        buf.grads_b[l][k] += g.biases[l][k] * inv;
                }
            }
            for (int l = 0; l < m.layer_count(); ++l) {
                optim::apply_step<Scalar>(cfg.optimizer, m.weights[l], buf.grads_w[l],
                                          buf.accum_w[l], cfg);
                optim::apply_step<Scalar>(cfg.optimizer, m.biases[l], buf.grads_b[l],
                                          buf.accum_b[l], cfg);
            }
        }
        const double mean_loss = epoch_loss / static_cast<double>(X.size());
        if (!std::isfinite(mean_loss))
            throw NumericError("train_mlp: non-finite loss at epoch " + std::to_string(epoch + 1));
        result.loss_trace.push_back(mean_loss);
    }
    return result;
}

/// Dataset convenience: flattens patches and maps center labels to class indices.
inline MlpTrainResult<float> train_mlp(const raster::PatchDataset& ds,
                                       const std::vector<int>& hidden_sizes,
                                       const optim::TrainConfig& cfg) {
    std::vector<std::vector<float>> X;
    std::vector<int> idx;
    X.reserve(ds.patches.size());
    idx.reserve(ds.patches.size());
    for (const auto& patch : ds.patches) {
        X.push_back(raster::flatten_patch(patch));
        const auto it = std::lower_bound(ds.class_ids.begin(), ds.class_ids.end(), patch.center_label);
        idx.push_back(static_cast<int>(it - ds.class_ids.begin()));
    }
    return train_mlp<float>(X, idx, ds.class_ids, hidden_sizes, cfg);
}

std::string to_json_string(const Mlp<float>& m);
Mlp<float> mlp_from_json_string(const std::string& text);

}  // namespace patchland::nn
