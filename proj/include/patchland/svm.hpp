#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchland/raster.hpp"

namespace patchland::svm {

struct SvmHyperparams {
    double C = 10.0;
    double gamma = 0.3;
    double tol = 1e-3;    // KKT tolerance
    int max_passes = 200; // sweep cap before giving up with converged=false
};

/// Binary soft-margin RBF machine in dual form. Zero-alpha vectors are pruned,
/// so 0 < alpha_i <= C for everything stored here.
struct BinarySvm {
    std::vector<std::vector<float>> support_vectors;
    std::vector<double> alphas;
    std::vector<int> sv_labels;  // -1 or +1
    double bias = 0.0;
    double gamma = 0.3;
    bool converged = true;
};

/// One-vs-one ensemble: one binary machine per unordered class pair (a < b),
/// with a mapped to -1 and b to +1.
struct PairMachine {
    int class_a = 0;
    int class_b = 0;
    BinarySvm machine;
};

struct SvmModel {
    std::vector<int> class_ids;  // sorted
    int feature_length = 0;
    std::vector<PairMachine> machines;  // ordered by (class_a, class_b)
};

/// exp(-gamma * ||x - y||^2); the squared distance is accumulated in double.
double rbf_kernel(std::span<const float> x, std::span<const float> y, double gamma);

/// Sequential minimal optimization on the dual soft-margin problem.
/// Labels must be -1/+1 with at least one example of each sign.
BinarySvm train_binary_smo(const std::vector<std::vector<float>>& X, const std::vector<int>& y,
                           const SvmHyperparams& hp, std::uint64_t seed);

/// sum_i alpha_i y_i K(sv_i, x) + bias
double decision(const BinarySvm& m, std::span<const float> x);

SvmModel train_ovo(const std::vector<std::vector<float>>& X, const std::vector<int>& labels,
                   const SvmHyperparams& hp, std::uint64_t seed, int threads = 1);
SvmModel train_ovo(const raster::PatchDataset& ds, const SvmHyperparams& hp, std::uint64_t seed,
                   int threads = 1);

/// Majority vote over pairwise machines; ties broken by largest summed
/// |decision| over the tied classes' machines, then by lowest class id.
int predict(const SvmModel& model, std::span<const float> x);

std::string to_json_string(const SvmModel& model);
SvmModel svm_from_json_string(const std::string& text);

}  // namespace patchland::svm
