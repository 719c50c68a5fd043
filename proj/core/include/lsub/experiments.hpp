#pragma once

#include "lsub/data.hpp"
#include "lsub/evaluation.hpp"
#include "lsub/network.hpp"
#include "lsub/subspace.hpp"
#include "lsub/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lsub {

enum class MixtureGranularity { global, layerwise, per_weight };

std::string to_string(MixtureGranularity g);

struct Mixture {
    ParamVector params;
    /// Mixing weights over the inputs: one entry for global, one per layer
    /// group for layerwise, one per coordinate for per_weight.
    std::vector<Coordinate> weights;
};

/// θ = θ_1 + Σ_{i>1} w_i (θ_i − θ_1) with w drawn per scope. Two inputs use
/// w_2 = α ~ U[0,1]; more inputs use uniform simplex weights.
Mixture random_mixture(std::span<const ParamVector> params, MixtureGranularity granularity, Rng& rng);

/// Same combination with given weights for every scope (global granularity).
ParamVector mix(std::span<const ParamVector> params, const Coordinate& weights);

enum class ForkMode {
    /// Shared k-epoch prefix, forks differ in data order only.
    shared_prefix,
    /// Independent initializations and data orders, no shared prefix (k must be 0).
    different_init,
};

struct InstabilityOptions {
    std::size_t k = 0;
    std::size_t total_epochs = 0;
    std::vector<std::uint64_t> fork_seeds;
    ForkMode mode = ForkMode::shared_prefix;
    std::vector<double> alpha_grid = linspace(0.0, 1.0, 21);
    /// Draws used to estimate each random-mixture expectation.
    std::size_t mixture_samples = 8;
};

struct InstabilityResult {
    std::size_t k = 0;
    std::size_t total_epochs = 0;
    std::size_t num_models = 0;
    /// (α, accuracy) along the line between the first two forks.
    std::vector<std::pair<double, double>> path;
    std::vector<double> fork_accuracies;
    double weight_average_accuracy = 0.0;
    double output_ensemble_accuracy = 0.0;
    double mixture_global = 0.0;
    double mixture_layerwise = 0.0;
    double mixture_per_weight = 0.0;

    double mean_fork_accuracy() const;
    /// max − min accuracy along the path.
    double path_spread() const;
};

/// Trains forks of plain SGD runs (config.epochs is replaced by total_epochs)
/// and measures the linear path, weight average, output ensemble and random
/// mixtures between them. BN statistics are recomputed per evaluated point.
InstabilityResult instability_run(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                                  const TrainConfig& config, const InstabilityOptions& options,
                                  const EvalOptions& eval = {});

/// CSV with header "row,alpha,accuracy": one "path" row per α, then summary rows.
std::string instability_csv(const InstabilityResult& result);

/// Line over the parameters of g. f(x, P(α)) = g(x, P(0)) + (g(x, P(α+ε)) − g(x, P(α))) / ε.
struct IntegralModelState {
    Subspace line;
    double epsilon = 0.1;
};

/// Composite logits f(x, P(α)); P extends linearly past α = 1. Uses
/// train-mode (batch statistic) normalization, as during training.
Matrix integral_logits(const NetworkSpec& spec, const IntegralModelState& state, const Matrix& x, double alpha);

struct IntegralGrad {
    double loss = 0.0;
    std::vector<ParamVector> endpoint_grads;
};

/// Loss of f(x, P(α)) and its exact gradient with respect to both line endpoints.
IntegralGrad integral_loss_and_grad(const NetworkSpec& spec, const IntegralModelState& state, const Matrix& x,
                                    std::span<const int> labels, const LossKind& loss, double alpha);

/// Trains the line with the composite f (α ~ U[0,1] per batch) using the
/// trainer's schedule and optimizer. β is not applied.
IntegralModelState integral_train(const NetworkSpec& spec, const Dataset& train, const TrainConfig& config,
                                  double epsilon);

/// softmax(g(x, P(1))) with BN statistics recomputed at P(1) on `bn_data`.
Matrix integral_predict(const NetworkSpec& spec, const IntegralModelState& state, const Dataset& bn_data,
                        const Matrix& x, std::size_t bn_batch_size = 128);

/// E_α‖(1−α)ω1 + αω2 − θ*‖² for α ~ U[0,1], in closed form:
/// (‖a‖² + ‖b‖² + ⟨a,b⟩)/3 with a = ω1 − θ*, b = ω2 − θ*.
double convex_expected_line_loss(std::span<const double> w1, std::span<const double> w2,
                                 std::span<const double> target);

} // namespace lsub
