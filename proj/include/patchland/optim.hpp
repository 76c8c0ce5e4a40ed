#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace patchland::optim {

enum class Optimizer { adagrad, sgd };

/// Mini-batch training knobs shared by the MLP and CNN trainers.
struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 128;
    int epochs = 2000;
    Optimizer optimizer = Optimizer::adagrad;
    double adagrad_epsilon = 1e-8;
    std::uint64_t seed = 0;
};

/// Adagrad update: accumulator += grad^2; param -= lr * grad / (sqrt(acc) + eps).
/// Gradients and accumulators are kept in double regardless of parameter type.
template <typename Scalar>
void adagrad_step(std::span<Scalar> params, std::span<const double> grads,
                  std::span<double> accum, double lr, double epsilon) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        accum[i] += g * g;
        params[i] = static_cast<Scalar>(static_cast<double>(params[i]) -
                                        lr * g / (std::sqrt(accum[i]) + epsilon));
    }
}

template <typename Scalar>
void sgd_step(std::span<Scalar> params, std::span<const double> grads, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - lr * grads[i]);
}

template <typename Scalar>
void apply_step(Optimizer opt, std::span<Scalar> params, std::span<const double> grads,
                std::span<double> accum, const TrainConfig& cfg) {
    if (opt == Optimizer::adagrad)
        adagrad_step(params, grads, accum, cfg.learning_rate, cfg.adagrad_epsilon);
    else
        sgd_step(params, grads, cfg.learning_rate);
}

}  // namespace patchland::optim
