#include <lsub/data.hpp>
#include <lsub/evaluation.hpp>
#include <lsub/network.hpp>
#include <lsub/subspace.hpp>
#include <lsub/trainer.hpp>

#include <benchmark/benchmark.h>

#include <numeric>

using namespace lsub;

namespace {

const NetworkSpec& net() {
    static const NetworkSpec spec = NetworkSpec::mlp(16, std::vector<std::size_t>{32}, 3, true);
    return spec;
}

Batch make_batch(std::size_t n) {
    const auto data = synth_blobs(1, n, 16, 3, 0.25);
    return {data.inputs, data.labels};
}

void BM_Forward(benchmark::State& state) {
    const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
    Rng rng(1);
    const auto params = init_params(net(), rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(net(), params, BNStats{}, batch.x, ForwardMode::train));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Arg(512);

void BM_Backward(benchmark::State& state) {
    const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
    Rng rng(1);
    const auto params = init_params(net(), rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(backward(net(), params, batch.x, batch.labels, LossKind::cross_entropy()));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(32)->Arg(128)->Arg(512);

// Step cost as the number of endpoints grows; the network pass should dominate.
void BM_TrainStepSimplex(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto batch = make_batch(128);
    Rng rng(2);
    auto sub = init_subspace(net(), SubspaceShape::simplex(m), false, rng);
    auto opt = OptimizerState::zeros(sub);
    auto rngs = StepRngs::from_seed(3);
    TrainConfig config;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_step(sub, net(), batch, config, opt, rngs, 0.01));
    }
}
BENCHMARK(BM_TrainStepSimplex)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

void BM_TrainStepSamples(benchmark::State& state) {
    const auto batch = make_batch(128);
    Rng rng(2);
    auto sub = init_subspace(net(), SubspaceShape::line(), false, rng);
    auto opt = OptimizerState::zeros(sub);
    auto rngs = StepRngs::from_seed(3);
    TrainConfig config;
    config.samples = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_step(sub, net(), batch, config, opt, rngs, 0.01));
    }
}
BENCHMARK(BM_TrainStepSamples)->Arg(1)->Arg(2)->Arg(4);

void BM_AlphaSweep(benchmark::State& state) {
    const auto train = synth_blobs(4, 1024, 16, 3, 0.25);
    const auto test = synth_blobs(4, 512, 16, 3, 0.25, "test");
    Rng rng(5);
    const auto sub = init_subspace(net(), SubspaceShape::line(), false, rng);
    const auto grid = linspace(0.0, 1.0, 21);
    for (auto _ : state) benchmark::DoNotOptimize(alpha_sweep(net(), sub, train, test, grid));
}
BENCHMARK(BM_AlphaSweep)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
