#include "lsub/trainer.hpp"

#include "lsub/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace lsub {

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("train." + field + ": " + why);
    };
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (!(lr_max >= 0.0)) fail("lr_max", "must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
    if (!(beta >= 0.0)) fail("beta", "must be non-negative");
    if (!(lambda >= 0.0)) fail("lambda", "must be non-negative");
    if (samples == 0) fail("samples", "must be at least 1");
    if (samples > 1 && batch_size % samples != 0) fail("samples", "must divide batch_size");
    if (lambda > 0.0 && samples < 2) fail("lambda", "feature regularization needs samples >= 2");
    if (lambda > 0.0 && layerwise) fail("lambda", "feature regularization is not defined for layerwise sampling");
    if (loss.type == LossKind::Type::cross_entropy && !(loss.smoothing >= 0.0 && loss.smoothing < 1.0)) {
        fail("label_smoothing", "must lie in [0, 1)");
    }
}

double LrSchedule::at(std::size_t step) const {
    if (step < warmup_steps) {
        return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const std::size_t cosine_steps = total_steps > warmup_steps ? total_steps - warmup_steps : 0;
    if (cosine_steps == 0) return lr_max;
    const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(cosine_steps);
    return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

LrSchedule make_schedule(const TrainConfig& config, std::size_t steps_per_epoch) {
    LrSchedule s;
    s.lr_max = config.lr_max;
    s.total_steps = std::max<std::size_t>(1, config.epochs * steps_per_epoch);
    s.warmup_steps = std::min(config.warmup_epochs * steps_per_epoch, s.total_steps);
    return s;
}

OptimizerState OptimizerState::zeros(const Subspace& subspace) {
    OptimizerState s;
    s.momentum.assign(subspace.size(), ParamVector(subspace.table()));
    return s;
}

void apply_sgd_update(Subspace& subspace, const std::vector<ParamVector>& grads, double lr,
                      const TrainConfig& config, OptimizerState& state) {
    if (grads.size() != subspace.size() || state.momentum.size() != subspace.size()) {
        throw ConfigError("optimizer state does not match subspace endpoints");
    }
    const double wd = config.weight_decay;
    const double mu = config.momentum;
    for (std::size_t i = 0; i < subspace.size(); ++i) {
        auto w = subspace.endpoint(i).values();
        auto buf = state.momentum[i].values();
        const auto g = grads[i].values();
        require_same_layout(subspace.endpoint(i), grads[i], "apply_sgd_update");
        for (std::size_t e = 0; e < w.size(); ++e) {
            const double d = g[e] + wd * w[e];
            buf[e] = mu * buf[e] + d;
            w[e] -= lr * buf[e];
        }
    }
}

StepRngs StepRngs::from_seed(std::uint64_t seed) {
    return StepRngs{make_rng(seed, streams::coord), make_rng(seed, streams::pair)};
}

double coord_separation(const Coordinate& a, const Coordinate& b) {
    if (a.values.size() != b.values.size()) throw InputError("coordinates of different kinds");
    if (a.values.size() == 1) return std::abs(a.values[0] - b.values[0]);
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) l1 += std::abs(a.values[i] - b.values[i]);
    return 0.5 * l1;
}

FeatureReg feature_reg(const Matrix& phi_j, const Matrix& phi_k, double separation, double lambda) {
    if (phi_j.data().size() != phi_k.data().size()) throw ConfigError("feature blocks differ in size");
    FeatureReg out{0.0, Matrix(phi_j.rows(), phi_j.cols()), Matrix(phi_k.rows(), phi_k.cols()), true};
    const auto& a = phi_j.data();
    const auto& b = phi_k.data();
    double na = 0.0, nb = 0.0, d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
        d += a[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) {
        out.applied = false;
        return out;
    }
    const double scale = lambda * separation;
    out.value = scale * d * d / (na * nb);
    const double k = scale * 2.0 * d / (na * nb);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.grad_j.data()[i] = k * (b[i] - d / na * a[i]);
        out.grad_k.data()[i] = k * (a[i] - d / nb * b[i]);
    }
    return out;
}

namespace {

std::string describe(const SampleCoord& coord) {
    std::ostringstream s;
    auto put = [&](const Coordinate& c) {
        s << '(';
        for (std::size_t i = 0; i < c.values.size(); ++i) s << (i ? "," : "") << c.values[i];
        s << ')';
    };
    if (const auto* g = std::get_if<Coordinate>(&coord)) {
        put(*g);
    } else {
        for (const auto& [layer, c] : std::get<LayerwiseCoord>(coord).layers) {
            s << "L" << layer << ':';
            put(c);
            s << ' ';
        }
    }
    return s.str();
}

[[noreturn]] void numeric_abort(const std::string& what, std::size_t step, const std::vector<SampleCoord>& coords) {
    std::string msg = what + " at step " + std::to_string(step) + ", coord";
    for (const auto& c : coords) msg += " " + describe(c);
    throw NumericError(msg);
}

const Coordinate& as_global(const SampleCoord& c) { return std::get<Coordinate>(c); }

/// Adds β·∂cos²/∂ω for one sampled endpoint pair into grads.
void add_cosine_regularizer(const Subspace& subspace, const TrainConfig& config, StepRngs& rngs,
                            std::vector<ParamVector>& grads, StepMetrics& metrics) {
    if (config.beta <= 0.0) return;
    metrics.pair = pair_sample(subspace.size(), rngs.pair);
    if (!metrics.pair) return;
    const auto [j, k] = *metrics.pair;
    CosineReg reg;
    try {
        reg = cosine_reg(subspace.endpoint(j), subspace.endpoint(k));
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (endpoints " + std::to_string(j) + ", " + std::to_string(k) + ")");
    }
    grads[j].axpy(config.beta, reg.grad_a);
    grads[k].axpy(config.beta, reg.grad_b);
    metrics.pair_cos2 = reg.value;
    metrics.reg_value = config.beta * reg.value;
    metrics.endpoint_passes += 4;
}

} // namespace

StepMetrics train_step(Subspace& subspace, const NetworkSpec& spec, const Batch& batch, const TrainConfig& config,
                       OptimizerState& optimizer, StepRngs& rngs, double lr) {
    const std::size_t rows = batch.x.rows();
    if (rows == 0) throw InputError("train_step: empty batch");
    if (batch.labels.size() != rows) throw ConfigError("train_step: labels and inputs differ in length");
    const std::size_t s = config.samples;
    if (rows % s != 0) throw ConfigError("train_step: batch of " + std::to_string(rows) + " not divisible by samples");
    const std::size_t group_rows = rows / s;
    const std::size_t m = subspace.size();

    StepMetrics metrics;
    metrics.coords.reserve(s);
    std::vector<ParamVector> thetas;
    thetas.reserve(s);
    for (std::size_t g = 0; g < s; ++g) {
        metrics.coords.push_back(sample_coord(subspace.shape(), *subspace.table(), config.layerwise, rngs.coord));
        thetas.push_back(eval_point(subspace, metrics.coords.back()));
        metrics.endpoint_passes += m;
    }

    std::vector<Batch> groups;
    if (s == 1) {
        groups.push_back(batch);
    } else {
        for (std::size_t g = 0; g < s; ++g) {
            std::vector<std::size_t> idx(group_rows);
            std::iota(idx.begin(), idx.end(), g * group_rows);
            Batch part{batch.x.gather_rows(idx), {}};
            part.labels.assign(batch.labels.begin() + static_cast<std::ptrdiff_t>(g * group_rows),
                               batch.labels.begin() + static_cast<std::ptrdiff_t>((g + 1) * group_rows));
            groups.push_back(std::move(part));
        }
    }

    // Feature-similarity term between two sub-batches.
    std::optional<std::pair<std::size_t, std::size_t>> feature_pair;
    FeatureReg freg;
    if (config.lambda > 0.0 && s >= 2) {
        feature_pair = pair_sample(s, rngs.pair);
        const auto [a, b] = *feature_pair;
        const BNStats none;
        const auto fa = forward(spec, thetas[a], none, groups[a].x, ForwardMode::train);
        const auto fb = forward(spec, thetas[b], none, groups[b].x, ForwardMode::train);
        const double sep = coord_separation(as_global(metrics.coords[a]), as_global(metrics.coords[b]));
        freg = feature_reg(fa.features, fb.features, sep, config.lambda);
        if (freg.applied) {
            metrics.feature_reg_value = freg.value;
        } else {
            feature_pair.reset();
        }
    }

    std::vector<ParamVector> grads;
    double loss_sum = 0.0;
    const double scale = 1.0 / static_cast<double>(s);
    for (std::size_t g = 0; g < s; ++g) {
        BackwardOptions opts;
        opts.loss_scale = scale;
        if (feature_pair) {
            if (g == feature_pair->first) opts.feature_grad = &freg.grad_j;
            if (g == feature_pair->second) opts.feature_grad = &freg.grad_k;
        }
        BackwardResult res;
        try {
            res = backward(spec, thetas[g], groups[g].x, groups[g].labels, config.loss, opts);
        } catch (const NumericError& e) {
            numeric_abort(e.what(), optimizer.step, metrics.coords);
        }
        loss_sum += res.loss;
        auto routed = route_gradient(subspace, metrics.coords[g], res.grad);
        metrics.endpoint_passes += m;
        if (grads.empty()) {
            grads = std::move(routed);
        } else {
            for (std::size_t i = 0; i < m; ++i) grads[i] += routed[i];
            metrics.endpoint_passes += m;
        }
    }
    metrics.loss = loss_sum / static_cast<double>(s);
    if (!std::isfinite(metrics.loss)) numeric_abort("non-finite loss", optimizer.step, metrics.coords);

    add_cosine_regularizer(subspace, config, rngs, grads, metrics);
    apply_sgd_update(subspace, grads, lr, config, optimizer);
    metrics.endpoint_passes += 3 * m;
    ++optimizer.step;
    return metrics;
}

StepMetrics train_step(Subspace& subspace, const Objective& objective, const TrainConfig& config,
                       OptimizerState& optimizer, StepRngs& rngs, double lr) {
    const std::size_t m = subspace.size();
    StepMetrics metrics;
    metrics.coords.push_back(sample_coord(subspace.shape(), *subspace.table(), config.layerwise, rngs.coord));
    const ParamVector theta = eval_point(subspace, metrics.coords.back());
    ObjectiveValue value = objective(theta);
    if (!std::isfinite(value.loss)) numeric_abort("non-finite loss", optimizer.step, metrics.coords);
    metrics.loss = value.loss;
    auto grads = route_gradient(subspace, metrics.coords.back(), value.grad);
    metrics.endpoint_passes += 2 * m;
    add_cosine_regularizer(subspace, config, rngs, grads, metrics);
    apply_sgd_update(subspace, grads, lr, config, optimizer);
    metrics.endpoint_passes += 3 * m;
    ++optimizer.step;
    return metrics;
}

std::string to_json_line(const EpochRecord& record) {
    nlohmann::ordered_json j;
    j["epoch"] = record.epoch;
    j["lr"] = record.lr;
    j["train_loss"] = record.train_loss ? nlohmann::ordered_json(*record.train_loss) : nlohmann::ordered_json(nullptr);
    j["reg_value"] = record.reg_value ? nlohmann::ordered_json(*record.reg_value) : nlohmann::ordered_json(nullptr);
    j["mean_l2"] = record.geometry.mean_l2;
    j["mean_cos2"] = record.geometry.mean_cos2;
    auto pairs = nlohmann::ordered_json::array();
    for (const auto& p : record.geometry.pairs) {
        pairs.push_back({{"i", p.i}, {"j", p.j}, {"l2", p.l2}, {"cos2", p.cos2}});
    }
    j["pairs"] = std::move(pairs);
    return j.dump();
}

namespace {

Subspace initial_subspace(const NetworkSpec& spec, const SubspaceShape& shape, const TrainConfig& config) {
    Rng rng = make_rng(config.seed, streams::init);
    return init_subspace(spec, shape, config.point_init, rng);
}

} // namespace

Trainer::Trainer(NetworkSpec spec, const Dataset& train, SubspaceShape shape, TrainConfig config)
    : Trainer(spec, train, initial_subspace(spec, shape, config), config) {}

Trainer::Trainer(NetworkSpec spec, const Dataset& train, Subspace initial, TrainConfig config)
    : spec_(std::move(spec)),
      train_(&train),
      config_(std::move(config)),
      subspace_(std::move(initial)),
      optimizer_(OptimizerState::zeros(subspace_)),
      rngs_(StepRngs::from_seed(config_.seed)) {
    config_.validate();
    train.validate();
    if (train.dim() != spec_.input_dim()) {
        throw ConfigError("dataset dimension " + std::to_string(train.dim()) + " != network input_dim " +
                          std::to_string(spec_.input_dim()));
    }
    if (train.num_classes > spec_.num_classes()) throw ConfigError("dataset has more classes than the network outputs");
    if (!(*subspace_.table() == *spec_.table())) throw ConfigError("subspace does not match network");
    if (train.size() < config_.batch_size) {
        throw ConfigError("train.batch_size " + std::to_string(config_.batch_size) + " exceeds dataset size " +
                          std::to_string(train.size()));
    }
    steps_per_epoch_ = train.size() / config_.batch_size;
    schedule_ = make_schedule(config_, steps_per_epoch_);
    data_seed_ = derive_seed(config_.seed, streams::data_order);
}

void Trainer::reseed(std::uint64_t seed) {
    data_seed_ = derive_seed(seed, streams::data_order);
    rngs_ = StepRngs::from_seed(seed);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t e) const {
    std::vector<std::size_t> order(train_->size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(data_seed_, static_cast<std::uint64_t>(e)));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches(steps_per_epoch_);
    for (std::size_t b = 0; b < steps_per_epoch_; ++b) {
        batches[b].assign(order.begin() + static_cast<std::ptrdiff_t>(b * config_.batch_size),
                          order.begin() + static_cast<std::ptrdiff_t>((b + 1) * config_.batch_size));
    }
    return batches;
}

EpochRecord Trainer::snapshot() const {
    EpochRecord r;
    r.epoch = epoch_;
    r.lr = optimizer_.step < schedule_.total_steps ? schedule_.at(optimizer_.step) : 0.0;
    r.geometry = geometry_stats(subspace_);
    return r;
}

EpochRecord Trainer::run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record;
    double loss_sum = 0.0;
    double reg_sum = 0.0;
    const auto batches = epoch_batches(epoch_);
    for (const auto& rows : batches) {
        Batch batch{train_->inputs.gather_rows(rows), {}};
        batch.labels.reserve(rows.size());
        for (auto r : rows) batch.labels.push_back(train_->labels[r]);
        const double lr = schedule_.at(optimizer_.step);
        const auto metrics = train_step(subspace_, spec_, batch, config_, optimizer_, rngs_, lr);
        loss_sum += metrics.loss;
        reg_sum += metrics.reg_value + metrics.feature_reg_value;
        record.lr = lr;
    }
    ++epoch_;
    const double steps = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    record.epoch = epoch_;
    record.train_loss = loss_sum / steps;
    record.reg_value = reg_sum / steps;
    record.geometry = geometry_stats(subspace_);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

TrainResult train_run(const NetworkSpec& spec, const Dataset& train, const SubspaceShape& shape,
                      const TrainConfig& config, const EpochCallback& on_epoch) {
    Trainer trainer(spec, train, shape, config);
    TrainResult result{trainer.subspace(), {}};
    result.log.push_back(trainer.snapshot());
    if (on_epoch) on_epoch(result.log.back(), trainer.subspace());
    for (std::size_t e = 0; e < config.epochs; ++e) {
        result.log.push_back(trainer.run_epoch());
        if (on_epoch) on_epoch(result.log.back(), trainer.subspace());
    }
    result.subspace = trainer.subspace();
    return result;
}

} // namespace lsub
