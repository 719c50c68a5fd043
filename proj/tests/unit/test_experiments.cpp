#include <lsub/error.hpp>
#include <lsub/experiments.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>

using namespace lsub;

namespace {

NetworkSpec bn_net(std::size_t d, std::size_t k) {
    const std::vector<std::size_t> hidden{8};
    return NetworkSpec::mlp(d, hidden, k, true);
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 32;
    c.warmup_epochs = 1;
    c.seed = seed;
    return c;
}

std::vector<ParamVector> two_params(const NetworkSpec& spec, std::uint64_t seed) {
    return {oracle::random_params(spec, seed), oracle::random_params(spec, seed + 1)};
}

double mc_line_loss(std::span<const double> w1, std::span<const double> w2, std::span<const double> t, std::size_t n,
                    std::uint64_t seed, double* sem) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double sum = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double a = u(rng);
        double l = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double d = (1.0 - a) * w1[i] + a * w2[i] - t[i];
            l += d * d;
        }
        sum += l;
        sq += l * l;
    }
    const double mean = sum / static_cast<double>(n);
    *sem = std::sqrt((sq / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
    return mean;
}

} // namespace

TEST(Mixture, IdenticalInputsAreFixedPoints) {
    const auto spec = bn_net(4, 3);
    const auto p = oracle::random_params(spec, 1);
    const std::vector<ParamVector> same{p, p, p};
    Rng rng(2);
    for (auto g : {MixtureGranularity::global, MixtureGranularity::layerwise, MixtureGranularity::per_weight}) {
        EXPECT_EQ(random_mixture(same, g, rng).params, p) << to_string(g);
    }
}

TEST(Mixture, ZeroWeightGivesFirstVector) {
    const auto spec = bn_net(4, 3);
    const auto ps = two_params(spec, 3);
    EXPECT_EQ(mix(ps, Coordinate::weights({1.0, 0.0})), ps[0]);
    Rng rng(4);
    const auto m = random_mixture(ps, MixtureGranularity::global, rng);
    ASSERT_EQ(m.weights.size(), 1u);
    EXPECT_EQ(mix(ps, m.weights[0]), m.params);
}

TEST(Mixture, PerWeightStaysInBox) {
    const auto spec = bn_net(4, 3);
    const auto ps = two_params(spec, 5);
    Rng rng(6);
    const auto m = random_mixture(ps, MixtureGranularity::per_weight, rng);
    EXPECT_EQ(m.weights.size(), ps[0].size());
    for (std::size_t i = 0; i < ps[0].size(); ++i) {
        EXPECT_GE(m.params[i], std::min(ps[0][i], ps[1][i]) - 1e-15);
        EXPECT_LE(m.params[i], std::max(ps[0][i], ps[1][i]) + 1e-15);
    }
}

TEST(Mixture, LayerwiseDrawsPerGroup) {
    const auto spec = bn_net(4, 3);
    const auto ps = two_params(spec, 7);
    Rng rng(8);
    const auto m = random_mixture(ps, MixtureGranularity::layerwise, rng);
    ASSERT_EQ(m.weights.size(), spec.table()->groups().size());
    for (std::size_t gi = 0; gi < m.weights.size(); ++gi) {
        const auto& g = spec.table()->groups()[gi];
        const double a = m.weights[gi].values[1];
        for (std::size_t e = g.begin; e < g.end; ++e) EXPECT_EQ(m.params[e], ps[0][e] + a * (ps[1][e] - ps[0][e]));
    }
}

TEST(Mixture, SingleLayerLayerwiseEqualsGlobal) {
    const NetworkSpec spec({DenseLayer{3, 2}}, 3, 2);
    const auto ps = two_params(spec, 9);
    Rng a(10), b(10);
    EXPECT_EQ(random_mixture(ps, MixtureGranularity::layerwise, a).params,
              random_mixture(ps, MixtureGranularity::global, b).params);
}

TEST(Mixture, ManyInputsUseSimplexWeights) {
    const auto spec = bn_net(4, 3);
    std::vector<ParamVector> ps;
    for (int i = 0; i < 4; ++i) ps.push_back(oracle::random_params(spec, 20 + i));
    Rng rng(11);
    const auto m = random_mixture(ps, MixtureGranularity::global, rng);
    ASSERT_EQ(m.weights[0].values.size(), 4u);
    double s = 0.0;
    for (double w : m.weights[0].values) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Mixture, RejectsBadInputs) {
    const auto spec = bn_net(4, 3);
    const std::vector<ParamVector> one{oracle::random_params(spec, 1)};
    Rng rng(1);
    EXPECT_THROW(random_mixture(one, MixtureGranularity::global, rng), InputError);
    const NetworkSpec other({DenseLayer{4, 3}}, 4, 3);
    const std::vector<ParamVector> mismatched{oracle::random_params(spec, 1), oracle::random_params(other, 2)};
    EXPECT_THROW(random_mixture(mismatched, MixtureGranularity::global, rng), ConfigError);
}

TEST(Instability, FullPrefixGivesIdenticalForks) {
    const auto spec = bn_net(4, 3);
    const auto train = synth_blobs(12, 256, 4, 3, 0.3);
    const auto test = synth_blobs(12, 100, 4, 3, 0.3, "test");
    InstabilityOptions o;
    o.k = 2;
    o.total_epochs = 2;
    o.fork_seeds = {1, 2};
    o.mixture_samples = 2;
    const auto r = instability_run(spec, train, test, quick(2, 12), o);
    EXPECT_EQ(r.fork_accuracies[0], r.fork_accuracies[1]);
    EXPECT_EQ(r.path_spread(), 0.0);
    EXPECT_EQ(r.path.size(), 21u);
    EXPECT_EQ(r.path.front().first, 0.0);
    EXPECT_EQ(r.path.back().first, 1.0);
}

TEST(Instability, IdenticalForkSeedsGiveFlatPath) {
    const auto spec = bn_net(4, 3);
    const auto train = synth_blobs(13, 256, 4, 3, 0.3);
    const auto test = synth_blobs(13, 100, 4, 3, 0.3, "test");
    InstabilityOptions o;
    o.k = 1;
    o.total_epochs = 3;
    o.fork_seeds = {5, 5};
    o.mixture_samples = 1;
    const auto r = instability_run(spec, train, test, quick(3, 13), o);
    EXPECT_LE(r.path_spread(), 1.0 / 100.0);
}

TEST(Instability, FiveForksInOneCall) {
    const auto spec = bn_net(4, 3);
    const auto train = synth_blobs(14, 256, 4, 3, 0.3);
    const auto test = synth_blobs(14, 100, 4, 3, 0.3, "test");
    InstabilityOptions o;
    o.k = 1;
    o.total_epochs = 2;
    o.fork_seeds = {1, 2, 3, 4, 5};
    o.alpha_grid = linspace(0.0, 1.0, 5);
    o.mixture_samples = 2;
    const auto r = instability_run(spec, train, test, quick(2, 14), o);
    EXPECT_EQ(r.num_models, 5u);
    EXPECT_EQ(r.fork_accuracies.size(), 5u);
    for (double a : {r.weight_average_accuracy, r.output_ensemble_accuracy, r.mixture_global, r.mixture_layerwise,
                     r.mixture_per_weight}) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
    const auto csv = instability_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "row,alpha,accuracy");
    EXPECT_NE(csv.find("fork_4,,"), std::string::npos);
    EXPECT_NE(csv.find("num_models,,5"), std::string::npos);
}

TEST(Instability, RejectsInvalidOptions) {
    const auto spec = bn_net(4, 3);
    const auto data = synth_blobs(15, 64, 4, 3, 0.3);
    InstabilityOptions o;
    o.k = 3;
    o.total_epochs = 2;
    o.fork_seeds = {1, 2};
    EXPECT_THROW(instability_run(spec, data, data, quick(2, 1), o), InputError);
    o.k = 1;
    o.mode = ForkMode::different_init;
    EXPECT_THROW(instability_run(spec, data, data, quick(2, 1), o), InputError);
    o.k = 0;
    o.fork_seeds = {1};
    EXPECT_THROW(instability_run(spec, data, data, quick(2, 1), o), InputError);
}

TEST(Integral, ConstantLineGivesPlainOutput) {
    const auto spec = bn_net(4, 3);
    const auto p = oracle::random_params(spec, 16);
    const IntegralModelState s{Subspace(SubspaceShape::line(), {p, p}), 0.1};
    const Matrix x = oracle::random_matrix(6, 4, 17);
    const auto g = forward(spec, p, BNStats{}, x, ForwardMode::train).logits;
    for (double a : {0.0, 0.37, 1.0}) {
        const auto f = integral_logits(spec, s, x, a);
        for (std::size_t i = 0; i < g.data().size(); ++i) EXPECT_NEAR(f.data()[i], g.data()[i], 1e-12);
    }
}

TEST(Integral, GradientMatchesFiniteDifferences) {
    const auto spec = bn_net(4, 3);
    const IntegralModelState s{Subspace(SubspaceShape::line(), two_params(spec, 18)), 0.1};
    const Matrix x = oracle::random_matrix(8, 4, 19);
    const auto y = oracle::cyclic_labels(8, 3);
    for (double a : {0.2, 0.95}) {
        const auto r = integral_loss_and_grad(spec, s, x, y, LossKind::cross_entropy(), a);
        for (std::size_t i = 0; i < 2; ++i) {
            IntegralModelState probe = s;
            const auto fd = oracle::central_diff(
                [&](const ParamVector& w) {
                    probe.line.endpoint(i) = w;
                    return loss(integral_logits(spec, probe, x, a), y, LossKind::cross_entropy());
                },
                s.line.endpoint(i));
            EXPECT_LE(oracle::relative_error(r.endpoint_grads[i].values(), fd), 1e-5) << a << ' ' << i;
        }
    }
}

TEST(Integral, RiemannSumTelescopesToEndpoint) {
    const auto spec = bn_net(4, 3);
    const std::size_t n = 256;
    const IntegralModelState s{Subspace(SubspaceShape::line(), two_params(spec, 20)), 1.0 / static_cast<double>(n)};
    const Matrix x = oracle::random_matrix(10, 4, 21);
    Matrix mean(10, 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = integral_logits(spec, s, x, static_cast<double>(i) / static_cast<double>(n));
        for (std::size_t e = 0; e < f.data().size(); ++e) mean.data()[e] += f.data()[e] / static_cast<double>(n);
    }
    const auto g1 = forward(spec, s.line.endpoint(1), BNStats{}, x, ForwardMode::train).logits;
    for (std::size_t e = 0; e < g1.data().size(); ++e) EXPECT_NEAR(mean.data()[e], g1.data()[e], 1e-6);
}

TEST(Integral, PredictUsesEndpointWithRecomputedStats) {
    const auto spec = bn_net(4, 3);
    const IntegralModelState s{Subspace(SubspaceShape::line(), two_params(spec, 22)), 0.1};
    const auto data = synth_blobs(22, 100, 4, 3, 0.3);
    const auto p = integral_predict(spec, s, data, data.inputs, 32);
    const auto stats = recompute_bn_stats(spec, s.line.endpoint(1), data.inputs, 32);
    EXPECT_EQ(p, predict_proba(spec, s.line.endpoint(1), stats, data.inputs));
    EXPECT_EQ(p, integral_predict(spec, s, data, data.inputs, 32));
}

TEST(Integral, TrainingIsDeterministicAndLearns) {
    const auto spec = bn_net(4, 3);
    const auto train = synth_blobs(23, 256, 4, 3, 0.2);
    const auto test = synth_blobs(23, 200, 4, 3, 0.2, "test");
    const auto a = integral_train(spec, train, quick(12, 23), 0.1);
    const auto b = integral_train(spec, train, quick(12, 23), 0.1);
    EXPECT_EQ(a.line.endpoint(0), b.line.endpoint(0));
    EXPECT_EQ(a.line.endpoint(1), b.line.endpoint(1));
    // This task tops out near 0.7 for plain training too, so compare against it.
    const auto plain = train_run(spec, train, SubspaceShape::simplex(1), quick(12, 23)).subspace.endpoint(0);
    const double plain_acc = accuracy(spec, plain, recompute_bn_stats(spec, plain, train.inputs, 128), test);
    const double acc = accuracy_from_probs(integral_predict(spec, a, train, test.inputs), test.labels);
    EXPECT_GT(acc, 0.5);
    EXPECT_GE(acc, plain_acc - 0.05);
    EXPECT_THROW(integral_train(spec, train, quick(1, 1), 0.0), InputError);
}

TEST(Convex, ClosedFormExamples) {
    const std::vector<double> t{0.5, -1.0, 2.0};
    EXPECT_EQ(convex_expected_line_loss(t, t, t), 0.0);
    const std::vector<double> zero{0.0, 0.0, 0.0}, e1{1.0, 0.0, 0.0}, e2{0.0, 1.0, 0.0};
    EXPECT_NEAR(convex_expected_line_loss(e1, e2, zero), 2.0 / 3.0, 1e-15);
    double sem = 0.0;
    const double mc = mc_line_loss(e1, e2, zero, 1000000, 24, &sem);
    EXPECT_LT(std::abs(mc - 2.0 / 3.0), 3.0 * sem);
}

TEST(Convex, CoefficientIdentities) {
    Rng rng(25);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 1000000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = u(rng);
        s1 += (1 - a) * (1 - a);
        s2 += a * a;
        s3 += 2 * a * (1 - a);
    }
    // sd of each term is below 0.3
    const double tol = 3.0 * 0.3 / std::sqrt(static_cast<double>(n));
    EXPECT_NEAR(s1 / n, 1.0 / 3.0, tol);
    EXPECT_NEAR(s2 / n, 1.0 / 3.0, tol);
    EXPECT_NEAR(s3 / n, 1.0 / 3.0, tol);
}

TEST(Convex, IsConvexOnRandomPairs) {
    Rng rng(26);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t d = 7;
    std::vector<double> t(d);
    for (double& v : t) v = n(rng);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a1(d), a2(d), b1(d), b2(d), m1(d), m2(d);
        const double s = u(rng);
        for (std::size_t i = 0; i < d; ++i) {
            a1[i] = n(rng), a2[i] = n(rng), b1[i] = n(rng), b2[i] = n(rng);
            m1[i] = s * a1[i] + (1 - s) * b1[i];
            m2[i] = s * a2[i] + (1 - s) * b2[i];
        }
        EXPECT_LE(convex_expected_line_loss(m1, m2, t),
                  s * convex_expected_line_loss(a1, a2, t) + (1 - s) * convex_expected_line_loss(b1, b2, t) + 1e-10);
    }
    const std::vector<double> short_vec{1.0};
    EXPECT_THROW(convex_expected_line_loss(short_vec, t, t), InputError);
}
