#include "lsub/experiments.hpp"

#include "lsub/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace lsub {

std::string to_string(MixtureGranularity g) {
    switch (g) {
    case MixtureGranularity::global: return "global";
    case MixtureGranularity::layerwise: return "layerwise";
    case MixtureGranularity::per_weight: return "per_weight";
    }
    return "?";
}

namespace {

Coordinate draw_weights(std::size_t n, Rng& rng) {
    if (n == 2) {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        const double a = uniform(rng);
        return Coordinate::weights({1.0 - a, a});
    }
    return sample_global_coord(SubspaceShape::simplex(n), rng);
}

void check_inputs(std::span<const ParamVector> params) {
    if (params.size() < 2) throw InputError("mixture needs at least two parameter vectors");
    for (const auto& p : params) require_same_layout(params.front(), p, "random_mixture");
}

void mix_range(std::span<double> out, std::span<const ParamVector> params, const Coordinate& w, std::size_t begin,
               std::size_t end) {
    const auto base = params[0].values();
    for (std::size_t e = begin; e < end; ++e) {
        double v = base[e];
        for (std::size_t i = 1; i < params.size(); ++i) v += w.values[i] * (params[i][e] - base[e]);
        out[e] = v;
    }
}

} // namespace

ParamVector mix(std::span<const ParamVector> params, const Coordinate& weights) {
    check_inputs(params);
    if (weights.values.size() != params.size()) throw InputError("mix: one weight per parameter vector required");
    ParamVector out(params[0].table());
    mix_range(out.values(), params, weights, 0, out.size());
    return out;
}

Mixture random_mixture(std::span<const ParamVector> params, MixtureGranularity granularity, Rng& rng) {
    check_inputs(params);
    const std::size_t n = params.size();
    Mixture out{ParamVector(params[0].table()), {}};
    switch (granularity) {
    case MixtureGranularity::global:
        out.weights.push_back(draw_weights(n, rng));
        mix_range(out.params.values(), params, out.weights.back(), 0, out.params.size());
        break;
    case MixtureGranularity::layerwise:
        for (const auto& group : params[0].table()->groups()) {
            out.weights.push_back(draw_weights(n, rng));
            mix_range(out.params.values(), params, out.weights.back(), group.begin, group.end);
        }
        break;
    case MixtureGranularity::per_weight:
        out.weights.reserve(out.params.size());
        for (std::size_t e = 0; e < out.params.size(); ++e) {
            out.weights.push_back(draw_weights(n, rng));
            mix_range(out.params.values(), params, out.weights.back(), e, e + 1);
        }
        break;
    }
    return out;
}

double InstabilityResult::mean_fork_accuracy() const {
    if (fork_accuracies.empty()) return 0.0;
    return std::accumulate(fork_accuracies.begin(), fork_accuracies.end(), 0.0) /
           static_cast<double>(fork_accuracies.size());
}

double InstabilityResult::path_spread() const {
    if (path.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(path.begin(), path.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    return hi->second - lo->second;
}

InstabilityResult instability_run(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                                  const TrainConfig& config, const InstabilityOptions& options,
                                  const EvalOptions& eval) {
    const std::size_t n = options.fork_seeds.size();
    if (n < 2) throw InputError("instability_run needs at least two fork seeds");
    if (options.k > options.total_epochs) throw InputError("instability_run: k must not exceed T");
    if (options.mode == ForkMode::different_init && options.k != 0) {
        throw InputError("instability_run: different-initialization forks share no prefix (k must be 0)");
    }
    if (options.alpha_grid.empty() || options.alpha_grid.front() != 0.0 || options.alpha_grid.back() != 1.0) {
        throw InputError("instability_run: alpha grid must start at 0 and end at 1");
    }
    TrainConfig cfg = config;
    cfg.epochs = options.total_epochs;
    const auto shape = SubspaceShape::simplex(1);

    std::vector<ParamVector> forks;
    if (options.mode == ForkMode::shared_prefix) {
        Trainer prefix(spec, train, shape, cfg);
        for (std::size_t e = 0; e < options.k; ++e) prefix.run_epoch();
        for (auto seed : options.fork_seeds) {
            Trainer fork = prefix;
            fork.reseed(seed);
            while (fork.epoch() < options.total_epochs) fork.run_epoch();
            forks.push_back(fork.subspace().endpoint(0));
        }
    } else {
        for (auto seed : options.fork_seeds) {
            TrainConfig fork_cfg = cfg;
            fork_cfg.seed = seed;
            Trainer fork(spec, train, shape, fork_cfg);
            while (fork.epoch() < options.total_epochs) fork.run_epoch();
            forks.push_back(fork.subspace().endpoint(0));
        }
    }

    InstabilityResult result;
    result.k = options.k;
    result.total_epochs = options.total_epochs;
    result.num_models = n;

    std::vector<Matrix> probs;
    for (const auto& f : forks) {
        auto e = evaluate_params(spec, f, train, test, eval);
        result.fork_accuracies.push_back(e.accuracy);
        probs.push_back(std::move(e.probabilities));
    }
    result.output_ensemble_accuracy = accuracy_from_probs(ensemble_probs(probs), test.labels);
    result.weight_average_accuracy =
        evaluate_params(spec, mix(forks, Coordinate::weights(std::vector<double>(n, 1.0 / static_cast<double>(n)))),
                        train, test, eval)
            .accuracy;

    const Subspace line(SubspaceShape::line(), {forks[0], forks[1]});
    for (double a : options.alpha_grid) {
        result.path.emplace_back(a, evaluate_params(spec, eval_point(line, Coordinate::scalar(a)), train, test, eval).accuracy);
    }

    Rng rng = make_rng(config.seed, "mixture");
    auto expected_accuracy = [&](MixtureGranularity g) {
        double sum = 0.0;
        for (std::size_t s = 0; s < options.mixture_samples; ++s) {
            sum += evaluate_params(spec, random_mixture(forks, g, rng).params, train, test, eval).accuracy;
        }
        return options.mixture_samples ? sum / static_cast<double>(options.mixture_samples) : 0.0;
    };
    result.mixture_global = expected_accuracy(MixtureGranularity::global);
    result.mixture_layerwise = expected_accuracy(MixtureGranularity::layerwise);
    result.mixture_per_weight = expected_accuracy(MixtureGranularity::per_weight);
    return result;
}

std::string instability_csv(const InstabilityResult& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "row,alpha,accuracy\n";
    for (const auto& [a, acc] : r.path) out << "path," << a << ',' << acc << '\n';
    for (std::size_t i = 0; i < r.fork_accuracies.size(); ++i) out << "fork_" << i << ",," << r.fork_accuracies[i] << '\n';
    out << "weight_average,," << r.weight_average_accuracy << '\n';
    out << "output_ensemble,," << r.output_ensemble_accuracy << '\n';
    out << "mixture_global,," << r.mixture_global << '\n';
    out << "mixture_layerwise,," << r.mixture_layerwise << '\n';
    out << "mixture_per_weight,," << r.mixture_per_weight << '\n';
    out << "k,," << r.k << '\n';
    out << "total_epochs,," << r.total_epochs << '\n';
    out << "num_models,," << r.num_models << '\n';
    return out.str();
}

namespace {

struct IntegralPoints {
    std::array<double, 3> t{};
    std::array<double, 3> weight{};
};

IntegralPoints integral_points(double alpha, double epsilon) {
    return {{0.0, alpha + epsilon, alpha}, {1.0, 1.0 / epsilon, -1.0 / epsilon}};
}

void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0)) throw InputError("integral model: epsilon must be positive");
}

} // namespace

Matrix integral_logits(const NetworkSpec& spec, const IntegralModelState& state, const Matrix& x, double alpha) {
    check_epsilon(state.epsilon);
    const auto pts = integral_points(alpha, state.epsilon);
    const BNStats none;
    Matrix out(x.rows(), spec.num_classes());
    for (std::size_t p = 0; p < 3; ++p) {
        const auto theta = eval_point(state.line, Coordinate::scalar(pts.t[p]), Domain::extrapolate);
        const auto g = forward(spec, theta, none, x, ForwardMode::train).logits;
        for (std::size_t e = 0; e < out.data().size(); ++e) out.data()[e] += pts.weight[p] * g.data()[e];
    }
    return out;
}

IntegralGrad integral_loss_and_grad(const NetworkSpec& spec, const IntegralModelState& state, const Matrix& x,
                                    std::span<const int> labels, const LossKind& loss_kind, double alpha) {
    const Matrix f = integral_logits(spec, state, x, alpha);
    const LossValue lv = loss_with_grad(f, labels, loss_kind);
    if (!std::isfinite(lv.value)) {
        throw NumericError("integral model: non-finite loss at alpha " + std::to_string(alpha));
    }
    IntegralGrad out{lv.value, {ParamVector(state.line.table()), ParamVector(state.line.table())}};
    const auto pts = integral_points(alpha, state.epsilon);
    for (std::size_t p = 0; p < 3; ++p) {
        const Coordinate c = Coordinate::scalar(pts.t[p]);
        const auto theta = eval_point(state.line, c, Domain::extrapolate);
        Matrix upstream = lv.grad;
        for (double& v : upstream.data()) v *= pts.weight[p];
        const auto g = backward_from_logits(spec, theta, x, upstream);
        const auto routed = route_gradient(state.line, c, g, Domain::extrapolate);
        out.endpoint_grads[0] += routed[0];
        out.endpoint_grads[1] += routed[1];
    }
    return out;
}

IntegralModelState integral_train(const NetworkSpec& spec, const Dataset& train, const TrainConfig& config,
                                  double epsilon) {
    check_epsilon(epsilon);
    TrainConfig cfg = config;
    cfg.samples = 1;
    cfg.lambda = 0.0;
    cfg.beta = 0.0;
    cfg.layerwise = false;
    // The trainer only provides data order, schedule and seeds here.
    Trainer driver(spec, train, SubspaceShape::line(), cfg);
    IntegralModelState state{driver.subspace(), epsilon};
    OptimizerState opt = OptimizerState::zeros(state.line);
    Rng coord_rng = make_rng(cfg.seed, streams::coord);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        for (const auto& rows : driver.epoch_batches(e)) {
            const Matrix x = train.inputs.gather_rows(rows);
            std::vector<int> labels;
            labels.reserve(rows.size());
            for (auto r : rows) labels.push_back(train.labels[r]);
            const double alpha = uniform(coord_rng);
            const double lr = driver.schedule().at(opt.step);
            auto grad = integral_loss_and_grad(spec, state, x, labels, cfg.loss, alpha);
            apply_sgd_update(state.line, grad.endpoint_grads, lr, cfg, opt);
            ++opt.step;
        }
    }
    return state;
}

Matrix integral_predict(const NetworkSpec& spec, const IntegralModelState& state, const Dataset& bn_data,
                        const Matrix& x, std::size_t bn_batch_size) {
    const auto theta = eval_point(state.line, Coordinate::scalar(1.0));
    const BNStats stats = recompute_bn_stats(spec, theta, bn_data.inputs, bn_batch_size);
    return predict_proba(spec, theta, stats, x);
}

double convex_expected_line_loss(std::span<const double> w1, std::span<const double> w2,
                                 std::span<const double> target) {
    if (w1.size() != w2.size() || w1.size() != target.size()) {
        throw InputError("convex_expected_line_loss: dimension mismatch");
    }
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < w1.size(); ++i) {
        const double a = w1[i] - target[i];
        const double b = w2[i] - target[i];
        aa += a * a;
        bb += b * b;
        ab += a * b;
    }
    return (aa + bb + ab) / 3.0;
}

} // namespace lsub
