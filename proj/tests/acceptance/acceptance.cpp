// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <lsub/checkpoint.hpp>
#include <lsub/data.hpp>
#include <lsub/evaluation.hpp>
#include <lsub/experiments.hpp>
#include <lsub/subspace.hpp>
#include <lsub/trainer.hpp>
#include <lsub_cli/app.hpp>
#include <lsub_cli/config.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace lsub;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool bits_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Shared desk-scale task for the orthogonality and sweep criteria: 3 Gaussian
// blobs in 16 dimensions, overlapping enough that accuracy sits near 0.93.
struct LineTask {
    NetworkSpec spec = NetworkSpec::mlp(16, std::vector<std::size_t>{32}, 3, true);
    std::vector<Dataset> train, test;
    std::vector<Subspace> ortho, plain;
};

TrainConfig line_config(std::uint64_t seed, double beta) {
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = 128;
    c.seed = seed;
    c.beta = beta;
    return c;
}

LineTask& line_task() {
    static LineTask t = [] {
        LineTask t;
        for (std::uint64_t s = 0; s < 3; ++s) {
            t.train.push_back(synth_blobs(100 + s, 2048, 16, 3, 0.25));
            t.test.push_back(synth_blobs(100 + s, 1024, 16, 3, 0.25, "test"));
            t.ortho.push_back(train_run(t.spec, t.train[s], SubspaceShape::line(), line_config(s, 1.0)).subspace);
            t.plain.push_back(train_run(t.spec, t.train[s], SubspaceShape::line(), line_config(s, 0.0)).subspace);
        }
        return t;
    }();
    return t;
}

Outcome gradient_exactness() {
    const auto spec = NetworkSpec::mlp(6, std::vector<std::size_t>{12, 10}, 4, true);
    const Matrix x = oracle::random_matrix(16, 6, 1);
    const auto y = oracle::cyclic_labels(16, 4);
    double worst = 0.0;
    std::size_t checks = 0, redrawn = 0;
    Rng rng(2);
    for (const auto& shape : {SubspaceShape::line(), SubspaceShape::bezier(), SubspaceShape::simplex(3)}) {
        std::vector<ParamVector> ends;
        for (std::size_t i = 0; i < shape.endpoint_count(); ++i) ends.push_back(oracle::random_params(spec, 10 + i, 0.5));
        const Subspace sub(shape, ends);
        for (bool layerwise : {false, true}) {
            for (int draw = 0; draw < 3; ++draw) {
                auto coord = sample_coord(shape, *spec.table(), layerwise, rng);
                // A step of 1e-5 must not carry any ReLU input across zero.
                while (oracle::relu_margin(spec, eval_point(sub, coord), x) < 1e-3) {
                    coord = sample_coord(shape, *spec.table(), layerwise, rng);
                    ++redrawn;
                }
                worst = std::max(worst, oracle::routed_gradient_error(spec, sub, coord, x, y));
                ++checks;
            }
        }
    }
    return {worst <= 1e-5, fmt("%zu params, %zu checks, max rel err %.3g (tol 1e-5); %zu draws within 1e-3 of a ReLU kink redrawn",
                                spec.param_count(), checks, worst, redrawn)};
}

Outcome reduction_equivalence() {
    const auto spec = NetworkSpec::mlp(8, std::vector<std::size_t>{16}, 3, true);
    const auto train = synth_blobs(5, 512, 8, 3, 0.2);
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 32;
    c.warmup_epochs = 1;
    c.seed = 5;
    const auto ours = train_run(spec, train, SubspaceShape::simplex(1), c).subspace.endpoint(0);
    const auto ref = oracle::reference_sgd(spec, train, c);
    std::size_t differing = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) differing += !bits_equal(ours.values().subspan(i, 1), ref.values().subspan(i, 1));
    return {differing == 0, fmt("%zu of %zu parameters differ bitwise after 5 epochs", differing, ref.size())};
}

Outcome convex_oracle() {
    // Training on the quadratic.
    const std::size_t n = 6;
    const auto table = std::make_shared<const SegmentTable>(std::vector<Segment>{{0, SegmentKind::dense_weight, 0, n}});
    ParamVector target(table);
    for (std::size_t i = 0; i < n; ++i) target[i] = 0.3 * static_cast<double>(i) - 0.7;
    Subspace sub(SubspaceShape::line(), {ParamVector(table, 2.0), ParamVector(table, -1.5)});
    TrainConfig c;
    c.beta = 0.0;
    c.weight_decay = 0.0;
    c.lr_max = 0.05;
    auto state = OptimizerState::zeros(sub);
    StepRngs rngs = StepRngs::from_seed(9);
    const Objective quad = [&](const ParamVector& theta) {
        ParamVector d = theta - target;
        return ObjectiveValue{dot(d, d), 2.0 * d};
    };
    const LrSchedule sched{c.lr_max, 100, 4000};
    for (std::size_t s = 0; s < sched.total_steps; ++s) train_step(sub, quad, c, state, rngs, sched.at(s));
    double dist = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        const ParamVector d = sub.endpoint(i) - target;
        dist = std::max(dist, std::sqrt(dot(d, d)));
    }

    // Closed form against Monte Carlo.
    Rng rng(24);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> w1(n), w2(n), t(n);
    for (std::size_t i = 0; i < n; ++i) w1[i] = normal(rng), w2[i] = normal(rng), t[i] = normal(rng);
    const std::size_t draws = 1000000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
        const double a = uniform(rng);
        double l = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (1 - a) * w1[i] + a * w2[i] - t[i];
            l += d * d;
        }
        sum += l;
        sq += l * l;
    }
    const double mc = sum / draws;
    const double sem = std::sqrt((sq / draws - mc * mc) / draws);
    const double closed = convex_expected_line_loss(w1, w2, t);
    const double z = std::abs(mc - closed) / sem;

    // Convexity along random chords.
    double worst_gap = -std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a1(n), a2(n), b1(n), b2(n), m1(n), m2(n);
        const double s = uniform(rng);
        for (std::size_t i = 0; i < n; ++i) {
            a1[i] = normal(rng), a2[i] = normal(rng), b1[i] = normal(rng), b2[i] = normal(rng);
            m1[i] = s * a1[i] + (1 - s) * b1[i];
            m2[i] = s * a2[i] + (1 - s) * b2[i];
        }
        const double gap = convex_expected_line_loss(m1, m2, t) -
                           (s * convex_expected_line_loss(a1, a2, t) + (1 - s) * convex_expected_line_loss(b1, b2, t));
        worst_gap = std::max(worst_gap, gap);
    }
    const bool pass = dist <= 1e-3 && z <= 3.0 && worst_gap <= 1e-10;
    return {pass, fmt("endpoint distance %.3g (tol 1e-3); MC %.6f vs closed %.6f, %.2f sigma; worst convexity gap %.3g",
                      dist, mc, closed, z, worst_gap)};
}

Outcome orthogonality() {
    auto& t = line_task();
    double ortho = 0.0, plain = 0.0;
    std::string per_seed;
    for (std::size_t s = 0; s < 3; ++s) {
        const double a = geometry_stats(t.ortho[s]).mean_cos2;
        const double b = geometry_stats(t.plain[s]).mean_cos2;
        ortho += a / 3;
        plain += b / 3;
        per_seed += fmt(" [%.4f/%.4f]", a, b);
    }
    return {ortho <= 0.1 && plain > ortho,
            fmt("mean cos2 beta=1 %.5f (tol 0.1), beta=0 %.5f; per seed beta1/beta0%s", ortho, plain, per_seed.c_str())};
}

Outcome sweep_structure() {
    auto& t = line_task();
    const auto grid = linspace(0.0, 1.0, 21);
    std::vector<double> acc(grid.size(), 0.0);
    double endpoint_mean = 0.0, ensemble = 0.0, start = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
        const auto rows = alpha_sweep(t.spec, t.ortho[s], t.train[s], t.test[s], grid);
        for (std::size_t i = 0; i < grid.size(); ++i) acc[i] += rows[i].accuracy / 3;
        endpoint_mean += (rows.front().accuracy + rows.back().accuracy) / 6;
        ensemble += rows.front().ensemble_accuracy / 3;
        start += rows.front().accuracy / 3;
    }
    double dev = 0.0;
    for (double a : acc) dev = std::max(dev, std::abs(a - endpoint_mean));
    const bool pass = dev <= 0.02 && ensemble >= start - 0.005;
    return {pass, fmt("endpoint mean %.4f, max |acc(a) - mean| %.4f (tol 0.02), min %.4f max %.4f; "
                      "ensemble %.4f vs alpha=0 %.4f (margin %+.4f, tol -0.005)",
                      endpoint_mean, dev, *std::min_element(acc.begin(), acc.end()),
                      *std::max_element(acc.begin(), acc.end()), ensemble, start, ensemble - start)};
}

Outcome ensemble_symmetry() {
    auto& t = line_task();
    const auto grid = linspace(0.0, 1.0, 21);
    std::size_t mismatches = 0, cases = 0;
    auto check = [&](const NetworkSpec& spec, const Subspace& sub, const Dataset& bn, const Dataset& test) {
        const auto rows = alpha_sweep(spec, sub, bn, test, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            mismatches += rows[i].ensemble_accuracy != rows[grid.size() - 1 - i].ensemble_accuracy;
            ++cases;
        }
        mismatches += rows[10].ensemble_accuracy != rows[10].accuracy;
        ++cases;
    };
    check(t.spec, t.ortho[0], t.train[0], t.test[0]);
    Rng rng(3);
    check(t.spec, init_subspace(t.spec, SubspaceShape::bezier(), false, rng), t.train[1], t.test[1]);
    return {mismatches == 0, fmt("%zu of %zu exact equalities failed (line and bezier)", mismatches, cases)};
}

Outcome sampling_statistics() {
    std::vector<std::string> failures;
    Rng rng(7);
    const std::size_t n = 10000;
    const double dn = static_cast<double>(n);

    std::vector<double> w(n);
    for (auto& v : w) v = sample_global_coord(SubspaceShape::simplex(2), rng).values[0];
    std::sort(w.begin(), w.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) ks = std::max({ks, (i + 1) / dn - w[i], w[i] - i / dn});
    const double ks_crit = 1.6276 / std::sqrt(dn);
    if (ks >= ks_crit) failures.push_back("KS");

    // Dirichlet(1,1,1,1) marginals are Beta(1,3): E w = 1/4, E w^2 = 1/10, E w^4 = 1/35.
    std::vector<double> m1(4, 0.0), m2(4, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = sample_global_coord(SubspaceShape::simplex(4), rng);
        for (std::size_t j = 0; j < 4; ++j) m1[j] += c.values[j] / dn, m2[j] += c.values[j] * c.values[j] / dn;
    }
    const double se1 = std::sqrt((0.1 - 0.0625) / dn);
    const double se2 = std::sqrt((1.0 / 35.0 - 0.01) / dn);
    double z_moment = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        z_moment = std::max({z_moment, std::abs(m1[j] - 0.25) / se1, std::abs(m2[j] - 0.1) / se2});
    }
    if (z_moment > 3.0) failures.push_back("moments");

    double z_pair = 0.0;
    for (std::size_t m : {3u, 4u}) {
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
        for (std::size_t i = 0; i < n; ++i) ++counts[*pair_sample(m, rng)];
        const double pairs = m * (m - 1) / 2.0;
        const double p = 1.0 / pairs;
        if (counts.size() != static_cast<std::size_t>(pairs)) failures.push_back("pair coverage");
        for (const auto& [pr, cnt] : counts) {
            z_pair = std::max(z_pair, std::abs(cnt - dn * p) / std::sqrt(dn * p * (1 - p)));
        }
    }
    if (z_pair > 3.0) failures.push_back("pair frequencies");
    return {failures.empty(), fmt("KS D %.4f (crit %.4f); worst moment %.2f sigma; worst pair frequency %.2f sigma",
                                  ks, ks_crit, z_moment, z_pair)};
}

Matrix rows_of(std::initializer_list<std::vector<double>> rows) {
    Matrix m(rows.size(), rows.begin()->size());
    std::size_t r = 0;
    for (const auto& row : rows) std::copy(row.begin(), row.end(), m.row(r++).begin());
    return m;
}

Outcome metric_units() {
    std::vector<std::string> failed;
    auto exact = [&](const char* name, double got, double want) {
        if (got != want) failed.push_back(fmt("%s got %.17g want %.17g", name, got, want));
    };
    exact("ece perfect", ece(rows_of({{1.0, 0.0}, {0.0, 1.0}}), std::vector<int>{0, 1}, 15), 0.0);
    exact("ece single", ece(rows_of({{0.8, 0.2}}), std::vector<int>{1}, 15), 0.8);
    // Two bins: (0, .5] holds conf .5 (right) and .25 (wrong); (.5, 1] holds .75 and 1.0 (both right).
    const Matrix p = rows_of({{0.5, 0.25, 0.25}, {0.25, 0.25, 0.5}, {0.75, 0.125, 0.125}, {0.0, 1.0, 0.0}});
    const std::vector<int> y{0, 0, 0, 1};
    exact("ece by hand", ece(p, y, 2), 0.5 * std::abs(0.5 - 0.5) + 0.5 * std::abs(1.0 - 0.875));
    exact("tv identical", tv_distance(rows_of({{0.5, 0.5}}), rows_of({{0.5, 0.5}})), 0.0);
    exact("tv opposite", tv_distance(rows_of({{1.0, 0.0}}), rows_of({{0.0, 1.0}})), 1.0);
    exact("tv quarter", tv_distance(rows_of({{0.5, 0.5}}), rows_of({{0.75, 0.25}})), 0.25);
    exact("relative same", relative_change(0.7, 0.7), 0.0);
    // 0.8, 0.6, 0.55 and 0.1 have no exact binary form; agree to rounding.
    double rounding = std::max(std::abs(relative_change(0.8, 0.6) + 0.25), std::abs(relative_change(0.5, 0.55) - 0.1));
    if (rounding > 1e-15) failed.push_back(fmt("relative_change off by %.3g", rounding));

    const std::size_t n = 500, k = 5;
    Matrix probs = oracle::random_matrix(n, k, 15, 0.0, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double s = std::accumulate(probs.row(r).begin(), probs.row(r).end(), 0.0);
        for (double& v : probs.row(r)) v /= s;
    }
    const auto labels = oracle::cyclic_labels(n, k);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(16);
    std::size_t order_failures = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> shuffled(n);
        for (std::size_t i = 0; i < n; ++i) shuffled[i] = labels[perm[i]];
        order_failures += ece(probs, labels, 15) != ece(probs.gather_rows(perm), shuffled, 15);
    }
    if (order_failures) failed.push_back(fmt("ECE changed under %zu shuffles", order_failures));
    std::string detail = failed.empty() ? "ECE/TV/relative_change examples exact (decimal relative_change inputs to "
                                          "1e-15, max err " + fmt("%.3g", rounding) + "); ECE order-invariant on 10 shuffles"
                                        : failed.front();
    return {failed.empty(), detail};
}

Outcome label_noise() {
    const auto spec = NetworkSpec::mlp(16, std::vector<std::size_t>{32}, 3, true);
    double margin = 0.0;
    std::string per_seed;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto clean = synth_blobs(200 + s, 2048, 16, 3, 0.25);
        const auto train = inject_label_noise(clean, 0.25, derive_seed(s, streams::label_noise));
        const auto test = synth_blobs(200 + s, 1024, 16, 3, 0.25, "test");
        TrainConfig c = line_config(s, 1.0);
        c.epochs = 40;
        const auto sub = train_run(spec, train, SubspaceShape::simplex(4), c).subspace;
        double endpoints = 0.0;
        for (std::size_t i = 0; i < sub.size(); ++i) {
            endpoints += evaluate_params(spec, sub.endpoint(i), train, test).accuracy / sub.size();
        }
        const double mid = evaluate_params(spec, eval_point(sub, midpoint_coord(sub.shape())), train, test).accuracy;
        margin += (mid - endpoints) / 3;
        per_seed += fmt(" [mid %.4f ends %.4f]", mid, endpoints);
    }
    return {margin >= 0.0, fmt("mean midpoint - endpoint margin %+.4f;%s", margin, per_seed.c_str())};
}

Outcome instability() {
    // k = T on the 3-class task.
    const auto spec3 = NetworkSpec::mlp(16, std::vector<std::size_t>{32}, 3, true);
    const auto train3 = synth_blobs(300, 1024, 16, 3, 0.25);
    const auto test3 = synth_blobs(300, 1000, 16, 3, 0.25, "test");
    InstabilityOptions full;
    full.k = full.total_epochs = 10;
    full.fork_seeds = {1, 2};
    full.mixture_samples = 2;
    TrainConfig c3 = line_config(3, 0.0);
    const auto flat = instability_run(spec3, train3, test3, c3, full);
    const double step = 1.0 / static_cast<double>(test3.size());

    // Independent initializations on a 10-class task with a deeper net.
    const auto spec10 = NetworkSpec::mlp(16, std::vector<std::size_t>{16, 16}, 10, true);
    double barrier = 0.0;
    std::string per_seed;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto train = synth_blobs(400 + s, 2048, 16, 10, 0.2);
        const auto test = synth_blobs(400 + s, 1000, 16, 10, 0.2, "test");
        InstabilityOptions o;
        o.k = 0;
        o.total_epochs = 30;
        o.mode = ForkMode::different_init;
        o.fork_seeds = {derive_seed(s, "fork0"), derive_seed(s, "fork1")};
        o.mixture_samples = 2;
        const auto r = instability_run(spec10, train, test, line_config(s, 0.0), o);
        const double b = r.mean_fork_accuracy() - r.weight_average_accuracy;
        barrier += b / 3;
        per_seed += fmt(" [ends %.4f avg %.4f]", r.mean_fork_accuracy(), r.weight_average_accuracy);
    }
    const bool pass = flat.path_spread() <= step && barrier >= 0.10;
    return {pass, fmt("k=T path spread %.4f (tol %.4f); different-init barrier %.4f (need >= 0.10);%s", flat.path_spread(),
                      step, barrier, per_seed.c_str())};
}

Outcome integral_riemann() {
    const auto spec = NetworkSpec::mlp(4, std::vector<std::size_t>{8}, 3, true);
    const std::size_t n = 256;
    const IntegralModelState s{Subspace(SubspaceShape::line(),
                                        {oracle::random_params(spec, 20), oracle::random_params(spec, 21)}),
                               1.0 / static_cast<double>(n)};
    const Matrix x = oracle::random_matrix(10, 4, 22);
    Matrix mean(10, 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = integral_logits(spec, s, x, static_cast<double>(i) / static_cast<double>(n));
        for (std::size_t e = 0; e < f.data().size(); ++e) mean.data()[e] += f.data()[e] / static_cast<double>(n);
    }
    const auto g1 = forward(spec, s.line.endpoint(1), BNStats{}, x, ForwardMode::train).logits;
    double worst = 0.0;
    for (std::size_t e = 0; e < g1.data().size(); ++e) worst = std::max(worst, std::abs(mean.data()[e] - g1.data()[e]));
    return {worst <= 1e-6, fmt("max |mean f - g(P(1))| = %.3g over %zu logits (tol 1e-6)", worst, g1.data().size())};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "lsub");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, e;
    const int code = lsub::cli::run(static_cast<int>(argv.size()), argv.data(), out, e);
    if (err) *err = e.str();
    return code;
}

Outcome persistence() {
    std::vector<std::string> failed;
    const fs::path root = fs::temp_directory_path() / "lsub_acceptance";
    fs::remove_all(root);

    // Checkpoint round trip with awkward values.
    const auto spec = NetworkSpec::mlp(4, std::vector<std::size_t>{8}, 3, true);
    std::vector<ParamVector> ends{oracle::random_params(spec, 1), oracle::random_params(spec, 2),
                                  oracle::random_params(spec, 3)};
    ends[0][0] = -0.0;
    ends[0][1] = std::numeric_limits<double>::denorm_min();
    ends[0][2] = 1e308;
    ends[1][0] = std::nextafter(1.0, 2.0);
    const Subspace sub(SubspaceShape::bezier(), ends);
    save_subspace(root / "ckpt" / "s.ckpt", spec, sub);
    const auto loaded = load_subspace(root / "ckpt" / "s.ckpt");
    for (std::size_t i = 0; i < 3; ++i) {
        if (!bits_equal(loaded.subspace.endpoint(i).values(), ends[i].values())) failed.push_back("checkpoint");
    }

    // IDX: write, load, write again; bytes and values must agree.
    const auto blobs = synth_blobs(9, 300, 12, 4, 0.2);
    write_idx(blobs, root / "idx" / "a-images", root / "idx" / "a-labels");
    const auto a = load_idx(root / "idx" / "a-images", root / "idx" / "a-labels");
    write_idx(a, root / "idx" / "b-images", root / "idx" / "b-labels");
    const auto b = load_idx(root / "idx" / "b-images", root / "idx" / "b-labels");
    if (!bits_equal(a.inputs.data(), b.inputs.data()) || a.labels != b.labels || a.labels != blobs.labels ||
        slurp(root / "idx" / "a-images") != slurp(root / "idx" / "b-images")) {
        failed.push_back("idx");
    }

    // Every command twice: the second run reads the first run's manifest.
    const std::vector<std::string> small{"train.epochs=2",       "train.batch_size=32",        "train.warmup_epochs=1",
                                         "data.n_train=256",     "data.n_test=128",            "data.dim=4",
                                         "model.hidden=[8]",     "instability.k=1",            "instability.grid_points=5",
                                         "instability.mixture_samples=2", "eval.plane_resolution=5"};
    struct Cmd {
        std::string name;
        std::string sub;
        std::string checkpoint;
        std::string kind;
    };
    const auto run_dir = [&](const std::string& name) { return (root / "runs" / name).string(); };
    const std::vector<Cmd> commands{
        {"train-line", "train", "", "line"},
        {"train-bezier", "train", "", "bezier"},
        {"train-simplex", "train", "", "simplex3"},
        {"sweep", "sweep", run_dir("train-line"), ""},
        {"eval", "eval", run_dir("train-simplex"), ""},
        {"geometry", "geometry", run_dir("train-bezier"), ""},
        {"plane", "plane", run_dir("train-bezier"), ""},
        {"instability", "instability", "", "line"},
        {"integral", "integral", "", "line"},
    };
    std::size_t compared = 0;
    for (const auto& cmd : commands) {
        const fs::path first = root / "runs" / cmd.name;
        const fs::path second = root / "rerun" / cmd.name;
        std::vector<std::string> args{cmd.sub, "--out-dir", first.string()};
        std::vector<std::string> rerun{cmd.sub, "--config", (first / "manifest.json").string(), "--out-dir",
                                       second.string()};
        if (!cmd.checkpoint.empty()) {
            args.insert(args.end(), {"--checkpoint", cmd.checkpoint});
            rerun.insert(rerun.end(), {"--checkpoint", cmd.checkpoint});
        }
        // --set consumes every remaining argument.
        args.push_back("--set");
        args.insert(args.end(), small.begin(), small.end());
        if (!cmd.kind.empty()) args.push_back("subspace.kind=" + cmd.kind);
        std::string err;
        if (cli(args, &err) != 0) {
            failed.push_back(cmd.name + ": " + err);
            continue;
        }
        if (cli(rerun, &err) != 0) {
            failed.push_back(cmd.name + " rerun: " + err);
            continue;
        }
        const auto manifest = cli::Json::parse(slurp(first / "manifest.json"));
        for (const auto& f : manifest["metrics"]) {
            const auto name = f.get<std::string>();
            ++compared;
            if (slurp(first / name) != slurp(second / name)) failed.push_back(cmd.name + "/" + name);
        }
    }
    fs::remove_all(root);
    std::string detail = fmt("checkpoint and IDX bit-exact; %zu metric files byte-identical on re-run", compared);
    if (!failed.empty()) detail = "mismatch: " + failed.front();
    return {failed.empty(), detail};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient exactness", gradient_exactness},
        {"reduction equivalence", reduction_equivalence},
        {"convex oracle", convex_oracle},
        {"orthogonality dynamics", orthogonality},
        {"sweep structure", sweep_structure},
        {"ensemble symmetry", ensemble_symmetry},
        {"sampling statistics", sampling_statistics},
        {"metric units", metric_units},
        {"label noise", label_noise},
        {"instability harness", instability},
        {"integral model", integral_riemann},
        {"persistence and determinism", persistence},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
