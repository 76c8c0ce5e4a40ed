#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "patchland/errors.hpp"
#include "patchland/optim.hpp"
#include "patchland/raster.hpp"
#include "patchland/rng.hpp"

namespace patchland::cnn {

/// Spatial kernel extent of every convolution layer (Table-1 geometry).
inline constexpr int kKernelSize = 5;
inline constexpr int kPad = kKernelSize / 2;

template <typename S>
struct Tensor3 {
    int h = 0, w = 0, c = 0;
    std::vector<S> v;  // [row][col][channel]

    Tensor3() = default;
    Tensor3(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, S(0)) {}

    S at(int r, int cc, int ch) const { return v[(static_cast<std::size_t>(r) * w + cc) * c + ch]; }
    S& at(int r, int cc, int ch) { return v[(static_cast<std::size_t>(r) * w + cc) * c + ch]; }
    std::size_t size() const { return v.size(); }
};

/// 5x5 same-padded convolution layer (cross-correlation, stride 1).
template <typename S>
struct ConvLayer {
    int in_channels = 0;
    int filters = 0;
    std::vector<S> weights;  // [filter][kr][kc][cin]
    std::vector<S> biases;   // per filter

    std::size_t weight_index(int f, int kr, int kc, int ci) const {
        return ((static_cast<std::size_t>(f) * kKernelSize + kr) * kKernelSize + kc) * in_channels + ci;
    }
};

struct CnnArch {
    std::vector<int> conv_filters{500, 100};
    std::vector<int> fc_sizes{200, 84};
};

template <typename S>
struct Cnn {
    int patch_size = 0;
    int bands = 0;
    CnnArch arch;
    std::vector<ConvLayer<S>> conv;           // exactly two layers
    std::vector<int> fc_dims;                 // flatten, fc_sizes..., K
    std::vector<std::vector<S>> fc_weights;   // row-major (out x in)
    std::vector<std::vector<S>> fc_biases;
    std::vector<int> class_ids;

    int output_size() const { return fc_dims.back(); }
};

// ---------------------------------------------------------------------------
// Forward primitives
// ---------------------------------------------------------------------------

/// Same-padded cross-correlation plus bias, before the activation.
template <typename S>
Tensor3<double> conv2d_pre(const Tensor3<double>& input, const ConvLayer<S>& layer) {
    if (input.c != layer.in_channels) throw DataError("conv2d: channel count mismatch");
    Tensor3<double> out(input.h, input.w, layer.filters);
    for (int r = 0; r < input.h; ++r) {
        for (int cc = 0; cc < input.w; ++cc) {
            for (int f = 0; f < layer.filters; ++f) {
                double sum = static_cast<double>(layer.biases[f]);
                for (int kr = 0; kr < kKernelSize; ++kr) {
                    const int rr = r + kr - kPad;
                    if (rr < 0 || rr >= input.h) continue;
                    for (int kc = 0; kc < kKernelSize; ++kc) {
                        const int ccc = cc + kc - kPad;
                        if (ccc < 0 || ccc >= input.w) continue;
                        const double* in_px = input.v.data() +
                            (static_cast<std::size_t>(rr) * input.w + ccc) * input.c;
                        const S* wk = layer.weights.data() + layer.weight_index(f, kr, kc, 0);
                        for (int ci = 0; ci < input.c; ++ci)
                            sum += in_px[ci] * static_cast<double>(wk[ci]);
                    }
                }
                out.at(r, cc, f) = sum;
            }
        }
    }
    return out;
}

/// Spec-facing convolution: same-padded correlation, bias, then ReLU.
template <typename S>
Tensor3<double> conv2d_forward(const Tensor3<double>& input, const ConvLayer<S>& layer) {
    Tensor3<double> out = conv2d_pre(input, layer);
    for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
    return out;
}

struct PoolResult {
    Tensor3<double> output;
    std::vector<int> argmax;  // flat input index per output cell; first occurrence wins ties
};

/// 2x2 max-pooling with stride 2; trailing odd row/col discarded.
inline PoolResult maxpool_forward(const Tensor3<double>& input) {
    if (input.h < 2 || input.w < 2) throw DataError("maxpool: spatial dims must be >= 2");
    PoolResult res;
    res.output = Tensor3<double>(input.h / 2, input.w / 2, input.c);
    res.argmax.resize(res.output.size());
    for (int orow = 0; orow < res.output.h; ++orow) {
        for (int ocol = 0; ocol < res.output.w; ++ocol) {
            for (int ch = 0; ch < input.c; ++ch) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        const int r = orow * 2 + dr;
                        const int cc = ocol * 2 + dc;
                        const int idx = (r * input.w + cc) * input.c + ch;
                        if (input.v[idx] > best) {
                            best = input.v[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t out_idx =
                    (static_cast<std::size_t>(orow) * res.output.w + ocol) * input.c + ch;
                res.output.v[out_idx] = best;
                res.argmax[out_idx] = best_idx;
            }
        }
    }
    return res;
}

/// [row][col][channel] traversal; identical to the tensor's storage order.
inline std::vector<double> flatten(const Tensor3<double>& t) { return t.v; }

// ---------------------------------------------------------------------------
// Full network
// ---------------------------------------------------------------------------

template <typename S>
struct CnnCache {
    Tensor3<double> input;
    std::vector<Tensor3<double>> conv_pre, conv_post;
    std::vector<bool> pooled;
    std::vector<PoolResult> pool;
    std::vector<double> flat;
    std::vector<std::vector<double>> fc_pre, fc_post;
};

template <typename S>
struct CnnGrads {
    std::vector<std::vector<double>> conv_w, conv_b;
    std::vector<std::vector<double>> fc_w, fc_b;
    std::vector<double> input;  // gradient w.r.t. the input tensor
};

/// Spatial side lengths after each conv+pool stage for an input of side p.
/// Pooling is skipped (identity) whenever a spatial dim has shrunk below 2.
inline std::pair<int, int> conv_stack_geometry(int p) {
    const int after_first = (p >= 2) ? p / 2 : p;
    const int after_second = (after_first >= 2) ? after_first / 2 : after_first;
    return {after_first, after_second};
}

inline int flatten_length(int p, const CnnArch& arch) {
    return conv_stack_geometry(p).second * conv_stack_geometry(p).second * arch.conv_filters.at(1);
}

template <typename S>
Cnn<S> init_cnn(int patch_size, int bands, const CnnArch& arch, std::vector<int> class_ids,
                std::uint64_t seed) {
    if (patch_size <= 0 || patch_size % 2 == 0)
        throw ConfigError("init_cnn: patch size must be odd and positive");
    if (arch.conv_filters.size() != 2) throw ConfigError("init_cnn: expected two conv layers");
    if (arch.fc_sizes.size() != 2) throw ConfigError("init_cnn: expected two fully-connected layers");
    if (class_ids.size() < 2) throw ConfigError("init_cnn: need at least 2 classes");
    for (int f : arch.conv_filters)
        if (f <= 0) throw ConfigError("init_cnn: filter counts must be positive");
    for (int s : arch.fc_sizes)
        if (s <= 0) throw ConfigError("init_cnn: fc sizes must be positive");

    Cnn<S> m;
    m.patch_size = patch_size;
    m.bands = bands;
    m.arch = arch;
    m.class_ids = std::move(class_ids);
    Rng rng(derive_seed(seed, {0x434E4EULL}));

    int in_ch = bands;
    for (int layer = 0; layer < 2; ++layer) {
        ConvLayer<S> conv;
        conv.in_channels = in_ch;
        conv.filters = arch.conv_filters[layer];
        const double bound = std::sqrt(6.0 / (kKernelSize * kKernelSize * in_ch));
        conv.weights.resize(static_cast<std::size_t>(conv.filters) * kKernelSize * kKernelSize * in_ch);
        for (auto& v : conv.weights) v = static_cast<S>(rng.uniform(-bound, bound));
        conv.biases.assign(conv.filters, S(0));
        m.conv.push_back(std::move(conv));
        in_ch = arch.conv_filters[layer];
    }

    m.fc_dims.push_back(flatten_length(patch_size, arch));
    m.fc_dims.insert(m.fc_dims.end(), arch.fc_sizes.begin(), arch.fc_sizes.end());
    m.fc_dims.push_back(static_cast<int>(m.class_ids.size()));
    for (std::size_t l = 0; l + 1 < m.fc_dims.size(); ++l) {
        const int in = m.fc_dims[l];
        const int out = m.fc_dims[l + 1];
        const double bound = std::sqrt(6.0 / in);
        std::vector<S> w(static_cast<std::size_t>(out) * in);
        for (auto& v : w) v = static_cast<S>(rng.uniform(-bound, bound));
        m.fc_weights.push_back(std::move(w));
        m.fc_biases.emplace_back(static_cast<std::size_t>(out), S(0));
    }
    return m;
}

template <typename S>
Tensor3<double> patch_to_tensor(const raster::Patch& patch) {
    Tensor3<double> t(patch.p, patch.p, patch.bands);
    for (std::size_t i = 0; i < patch.values.size(); ++i) t.v[i] = patch.values[i];
    return t;
}

template <typename S>
std::pair<std::vector<double>, CnnCache<S>> cnn_forward(const Cnn<S>& m, const Tensor3<double>& input) {
    if (input.h != m.patch_size || input.w != m.patch_size || input.c != m.bands)
        throw DataError("cnn_forward: input geometry mismatch");

    CnnCache<S> cache;
    cache.input = input;
    Tensor3<double> cur = input;
    for (int layer = 0; layer < 2; ++layer) {
        Tensor3<double> pre = conv2d_pre(cur, m.conv[layer]);
        Tensor3<double> post = pre;
        for (auto& v : post.v) v = v > 0.0 ? v : 0.0;
        cache.conv_pre.push_back(pre);
        cache.conv_post.push_back(post);
        if (post.h >= 2 && post.w >= 2) {
            cache.pool.push_back(maxpool_forward(post));
            cache.pooled.push_back(true);
            cur = cache.pool.back().output;
        } else {
            cache.pool.emplace_back();
            cache.pooled.push_back(false);
            cur = post;
        }
    }
    cache.flat = flatten(cur);
    if (static_cast<int>(cache.flat.size()) != m.fc_dims.front())
        throw DataError("cnn_forward: flatten length mismatch");

    std::vector<double> act = cache.flat;
    const int fc_count = static_cast<int>(m.fc_weights.size());
    for (int l = 0; l < fc_count; ++l) {
        const int in = m.fc_dims[l];
        const int out = m.fc_dims[l + 1];
        std::vector<double> z(out);
        for (int o = 0; o < out; ++o) {
            double sum = static_cast<double>(m.fc_biases[l][o]);
            const S* row = m.fc_weights[l].data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) sum += static_cast<double>(row[i]) * act[i];
            z[o] = sum;
        }
        cache.fc_pre.push_back(z);
        if (l + 1 == fc_count) {
            const double mx = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            std::vector<double> probs(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                probs[i] = std::exp(z[i] - mx);
                sum += probs[i];
            }
            for (auto& v : probs) v /= sum;
            act = probs;
        } else {
            std::vector<double> a(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
            act = a;
        }
        cache.fc_post.push_back(act);
    }
    return {act, std::move(cache)};
}

template <typename S>
std::pair<std::vector<double>, CnnCache<S>> cnn_forward(const Cnn<S>& m, const raster::Patch& patch) {
    return cnn_forward(m, patch_to_tensor<S>(patch));
}

template <typename S>
CnnGrads<S> cnn_backward(const Cnn<S>& m, const CnnCache<S>& cache, int true_class) {
    CnnGrads<S> g;
    g.conv_w.resize(2);
    g.conv_b.resize(2);
    for (int layer = 0; layer < 2; ++layer) {
        g.conv_w[layer].assign(m.conv[layer].weights.size(), 0.0);
        g.conv_b[layer].assign(m.conv[layer].biases.size(), 0.0);
    }
    const int fc_count = static_cast<int>(m.fc_weights.size());
    g.fc_w.resize(fc_count);
    g.fc_b.resize(fc_count);

    // Dense stack, output delta = probs - onehot.
    std::vector<double> delta = cache.fc_post.back();
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= delta.size())
        throw DataError("cnn_backward: class index out of range");
    delta[true_class] -= 1.0;

    for (int l = fc_count - 1; l >= 0; --l) {
        const int in = m.fc_dims[l];
        const int out = m.fc_dims[l + 1];
        const std::vector<double>& prev = (l == 0) ? cache.flat : cache.fc_post[l - 1];
        g.fc_w[l].assign(static_cast<std::size_t>(out) * in, 0.0);
        g.fc_b[l].assign(out, 0.0);
        for (int o = 0; o < out; ++o) {
            g.fc_b[l][o] = delta[o];
            double* row = g.fc_w[l].data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) row[i] = delta[o] * prev[i];
        }
        std::vector<double> next(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const S* row = m.fc_weights[l].data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) next[i] += static_cast<double>(row[i]) * delta[o];
        }
        if (l > 0) {
            for (int i = 0; i < in; ++i)
                if (cache.fc_pre[l - 1][i] <= 0.0) next[i] = 0.0;
        }
        delta = std::move(next);
    }

    // delta now matches the flattened conv-stack output.
    for (int layer = 1; layer >= 0; --layer) {
        const Tensor3<double>& post = cache.conv_post[layer];
        Tensor3<double> d_post(post.h, post.w, post.c);
        if (cache.pooled[layer]) {
            // Route gradient to each window's stored argmax only.
            const auto& pool = cache.pool[layer];
            for (std::size_t j = 0; j < pool.argmax.size(); ++j)
                d_post.v[pool.argmax[j]] += delta[j];
        } else {
            d_post.v.assign(delta.begin(), delta.end());
        }
        // ReLU gate by the sign of the pre-activation.
        const Tensor3<double>& pre = cache.conv_pre[layer];
        for (std::size_t i = 0; i < d_post.size(); ++i)
            if (pre.v[i] <= 0.0) d_post.v[i] = 0.0;

        const Tensor3<double>& in_t =
            (layer == 0) ? cache.input
                         : (cache.pooled[0] ? cache.pool[0].output : cache.conv_post[0]);
        const ConvLayer<S>& conv = m.conv[layer];
        // Bias and kernel gradients.
        for (int r = 0; r < d_post.h; ++r) {
            for (int cc = 0; cc < d_post.w; ++cc) {
                for (int f = 0; f < conv.filters; ++f) {
                    const double dv = d_post.at(r, cc, f);
                    if (dv == 0.0) continue;
                    g.conv_b[layer][f] += dv;
                    for (int kr = 0; kr < kKernelSize; ++kr) {
                        const int rr = r + kr - kPad;
                        if (rr < 0 || rr >= in_t.h) continue;
                        for (int kc = 0; kc < kKernelSize; ++kc) {
                            const int ccc = cc + kc - kPad;
                            if (ccc < 0 || ccc >= in_t.w) continue;
                            for (int ci = 0; ci < in_t.c; ++ci)
                                g.conv_w[layer][conv.weight_index(f, kr, kc, ci)] +=
                                    dv * in_t.at(rr, ccc, ci);
                        }
                    }
                }
            }
        }
        // Gradient w.r.t. the layer input: correlation with the flipped kernel.
        Tensor3<double> d_in(in_t.h, in_t.w, in_t.c);
        for (int r = 0; r < d_post.h; ++r) {
            for (int cc = 0; cc < d_post.w; ++cc) {
                for (int f = 0; f < conv.filters; ++f) {
                    const double dv = d_post.at(r, cc, f);
                    if (dv == 0.0) continue;
                    for (int kr = 0; kr < kKernelSize; ++kr) {
                        const int rr = r + kr - kPad;
                        if (rr < 0 || rr >= in_t.h) continue;
                        for (int kc = 0; kc < kKernelSize; ++kc) {
                            const int ccc = cc + kc - kPad;
                            if (ccc < 0 || ccc >= in_t.w) continue;
                            for (int ci = 0; ci < in_t.c; ++ci)
                                d_in.at(rr, ccc, ci) +=
                                    dv * static_cast<double>(conv.weights[conv.weight_index(f, kr, kc, ci)]);
                        }
                    }
                }
            }
        }
        if (layer == 0)
            g.input.assign(d_in.v.begin(), d_in.v.end());
        else
            delta.assign(d_in.v.begin(), d_in.v.end());
    }
    return g;
}

template <typename S>
int cnn_predict(const Cnn<S>& m, const raster::Patch& patch) {
    const auto [probs, cache] = cnn_forward(m, patch);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return m.class_ids[best];
}

template <typename S>
struct CnnTrainResult {
    Cnn<S> model;
    std::vector<double> loss_trace;
};

/// Mini-batch Adagrad training over patch tensors; shared schedule with the
/// MLP trainer (seeded shuffle per epoch, short final batch kept).
template <typename S>
CnnTrainResult<S> train_cnn(const std::vector<Tensor3<double>>& X,
                            const std::vector<int>& class_indices,
                            const std::vector<int>& class_ids, int patch_size, int bands,
                            const CnnArch& arch, const optim::TrainConfig& cfg) {
    if (X.empty() || X.size() != class_indices.size())
        throw DataError("train_cnn: empty or mismatched training data");
    if (cfg.epochs < 1) throw ConfigError("train_cnn: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train_cnn: batch size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train_cnn: learning rate must be positive");

    CnnTrainResult<S> result;
    result.model = init_cnn<S>(patch_size, bands, arch, class_ids, cfg.seed);
    Cnn<S>& m = result.model;

    std::vector<std::vector<double>> grad_conv_w(2), grad_conv_b(2), acc_conv_w(2), acc_conv_b(2);
    for (int layer = 0; layer < 2; ++layer) {
        grad_conv_w[layer].assign(m.conv[layer].weights.size(), 0.0);
        grad_conv_b[layer].assign(m.conv[layer].biases.size(), 0.0);
        acc_conv_w[layer].assign(m.conv[layer].weights.size(), 0.0);
        acc_conv_b[layer].assign(m.conv[layer].biases.size(), 0.0);
    }
    const int fc_count = static_cast<int>(m.fc_weights.size());
    std::vector<std::vector<double>> grad_fc_w(fc_count), grad_fc_b(fc_count), acc_fc_w(fc_count),
        acc_fc_b(fc_count);
    for (int l = 0; l < fc_count; ++l) {
        grad_fc_w[l].assign(m.fc_weights[l].size(), 0.0);
        grad_fc_b[l].assign(m.fc_biases[l].size(), 0.0);
        acc_fc_w[l].assign(m.fc_weights[l].size(), 0.0);
        acc_fc_b[l].assign(m.fc_biases[l].size(), 0.0);
    }

    Rng shuffle_rng(derive_seed(cfg.seed, {0x53485546ULL}));
    std::vector<std::size_t> order(X.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            for (int layer = 0; layer < 2; ++layer) {
                std::fill(grad_conv_w[layer].begin(), grad_conv_w[layer].end(), 0.0);
                std::fill(grad_conv_b[layer].begin(), grad_conv_b[layer].end(), 0.0);
            }
            for (int l = 0; l < fc_count; ++l) {
                std::fill(grad_fc_w[l].begin(), grad_fc_w[l].end(), 0.0);
                std::fill(grad_fc_b[l].begin(), grad_fc_b[l].end(), 0.0);
            }
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t i = order[s];
                auto [probs, cache] = cnn_forward(m, X[i]);
                epoch_loss += -std::log(std::max(probs[class_indices[i]], 1e-12));
                const auto gr = cnn_backward(m, cache, class_indices[i]);
                for (int layer = 0; layer < 2; ++layer) {
                    for (std::size_t k = 0; k < gr.conv_w[layer].size(); ++k)
                        grad_conv_w[layer][k] += gr.conv_w[layer][k] * inv;
                    for (std::size_t k = 0; k < gr.conv_b[layer].size(); ++k)
                        grad_conv_b[layer][k] += gr.conv_b[layer][k] * inv;
                }
                for (int l = 0; l < fc_count; ++l) {
                    for (std::size_t k = 0; k < gr.fc_w[l].size(); ++k)
                        grad_fc_w[l][k] += gr.fc_w[l][k] * inv;
                    for (std::size_t k = 0; k < gr.fc_b[l].size(); ++k)
                        grad_fc_b[l][k] += gr.fc_b[l][k] * inv;
                }
            }
            for (int layer = 0; layer < 2; ++layer) {
                optim::apply_step<S>(cfg.optimizer, m.conv[layer].weights, grad_conv_w[layer],
                                     acc_conv_w[layer], cfg);
                optim::apply_step<S>(cfg.optimizer, m.conv[layer].biases, grad_conv_b[layer],
                                     acc_conv_b[layer], cfg);
            }
            for (int l = 0; l < fc_count; ++l) {
                optim::apply_step<S>(cfg.optimizer, m.fc_weights[l], grad_fc_w[l], acc_fc_w[l], cfg);
                optim::apply_step<S>(cfg.optimizer, m.fc_biases[l], grad_fc_b[l], acc_fc_b[l], cfg);
            }
        }
        const double mean_loss = epoch_loss / static_cast<double>(X.size());
        if (!std::isfinite(mean_loss))
            throw NumericError("train_cnn: non-finite loss at epoch " + std::to_string(epoch + 1));
        result.loss_trace.push_back(mean_loss);
    }
    return result;
}

/// Dataset convenience overload.
inline CnnTrainResult<float> train_cnn(const raster::PatchDataset& ds, const CnnArch& arch,
                                       const optim::TrainConfig& cfg) {
    std::vector<Tensor3<double>> X;
    std::vector<int> idx;
    X.reserve(ds.patches.size());
    idx.reserve(ds.patches.size());
    for (const auto& patch : ds.patches) {
        X.push_back(patch_to_tensor<float>(patch));
        const auto it = std::lower_bound(ds.class_ids.begin(), ds.class_ids.end(), patch.center_label);
        idx.push_back(static_cast<int>(it - ds.class_ids.begin()));
    }
    return train_cnn<float>(X, idx, ds.class_ids, ds.p, ds.bands, arch, cfg);
}

std::string to_json_string(const Cnn<float>& m);
Cnn<float> cnn_from_json_string(const std::string& text);

}  // namespace patchland::cnn
