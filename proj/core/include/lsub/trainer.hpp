#pragma once

#include "lsub/data.hpp"
#include "lsub/loss.hpp"
#include "lsub/network.hpp"
#include "lsub/subspace.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace lsub {

struct TrainConfig {
    std::size_t epochs = 160;
    std::size_t batch_size = 128;
    double lr_max = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t warmup_epochs = 5;
    /// Strength of the squared-cosine endpoint regularizer.
    double beta = 1.0;
    /// Strength of the feature-similarity regularizer (needs samples >= 2).
    double lambda = 0.0;
    /// Coordinates sampled per batch; the batch is split into this many groups.
    std::size_t samples = 1;
    bool layerwise = false;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::cross_entropy();
    bool point_init = false;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Linear warmup from 0 to lr_max over warmup_steps, then
/// lr_max · ½(1 + cos(π t / T')) over the remaining T' steps.
struct LrSchedule {
    double lr_max = 0.1;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;

    double at(std::size_t step) const;
};

LrSchedule make_schedule(const TrainConfig& config, std::size_t steps_per_epoch);
inline double lr_at(std::size_t step, const LrSchedule& schedule) { return schedule.at(step); }

/// One momentum buffer per endpoint.
struct OptimizerState {
    std::vector<ParamVector> momentum;
    std::size_t step = 0;

    static OptimizerState zeros(const Subspace& subspace);
};

/// Coupled weight decay and heavy-ball momentum on every endpoint:
///   d = g + wd·ω,  buf = μ·buf + d,  ω -= lr·buf.
void apply_sgd_update(Subspace& subspace, const std::vector<ParamVector>& grads, double lr,
                      const TrainConfig& config, OptimizerState& state);

/// Independent random streams consumed by a training step.
struct StepRngs {
    Rng coord;
    Rng pair;

    static StepRngs from_seed(std::uint64_t seed);
};

struct StepMetrics {
    /// Task loss, averaged over sub-batches.
    double loss = 0.0;
    /// β·cos²(ω_j, ω_k) for the sampled pair (0 when m < 2 or β = 0).
    double reg_value = 0.0;
    /// Unscaled cos²(ω_j, ω_k) for the sampled pair.
    double pair_cos2 = 0.0;
    double feature_reg_value = 0.0;
    std::vector<SampleCoord> coords;
    std::optional<std::pair<std::size_t, std::size_t>> pair;
    /// Number of full passes over an endpoint-sized vector made by the step.
    /// Depends on m and samples only, never on the batch size.
    std::size_t endpoint_passes = 0;
};

/// Labelled batch for one step.
struct Batch {
    Matrix x;
    std::vector<int> labels;
};

/// One iteration of subspace training on a network batch.
StepMetrics train_step(Subspace& subspace, const NetworkSpec& spec, const Batch& batch, const TrainConfig& config,
                       OptimizerState& optimizer, StepRngs& rngs, double lr);

/// Loss defined directly on parameters, e.g. ‖θ − θ*‖².
struct ObjectiveValue {
    double loss = 0.0;
    ParamVector grad;
};
using Objective = std::function<ObjectiveValue(const ParamVector& theta)>;

/// Same update as train_step with the network replaced by `objective` (samples = 1).
StepMetrics train_step(Subspace& subspace, const Objective& objective, const TrainConfig& config,
                       OptimizerState& optimizer, StepRngs& rngs, double lr);

struct FeatureReg {
    double value = 0.0;
    Matrix grad_j;
    Matrix grad_k;
    /// False when a feature block has zero norm and the term was skipped.
    bool applied = true;
};

/// λ · separation · cos²(φ_j, φ_k) over the flattened feature blocks.
FeatureReg feature_reg(const Matrix& phi_j, const Matrix& phi_k, double separation, double lambda);

/// Distance between two sampled coordinates used to scale the feature term:
/// |α_j − α_k| for Line/Bezier, ½‖α_j − α_k‖₁ for Simplex.
double coord_separation(const Coordinate& a, const Coordinate& b);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    /// Mean task loss over the epoch's steps; absent for the initial record.
    std::optional<double> train_loss;
    std::optional<double> reg_value;
    GeometryStats geometry;
    double wall_seconds = 0.0;
};

/// Serializes everything but wall time as one JSON line.
std::string to_json_line(const EpochRecord& record);

/// Stateful training loop over a dataset. Data order for epoch e is a pure
/// function of (data seed, e), so a run can be forked mid-way.
class Trainer {
public:
    Trainer(NetworkSpec spec, const Dataset& train, SubspaceShape shape, TrainConfig config);
    Trainer(NetworkSpec spec, const Dataset& train, Subspace initial, TrainConfig config);

    std::size_t steps_per_epoch() const { return steps_per_epoch_; }
    std::size_t epoch() const { return epoch_; }
    const Subspace& subspace() const { return subspace_; }
    const OptimizerState& optimizer() const { return optimizer_; }
    const TrainConfig& config() const { return config_; }
    const LrSchedule& schedule() const { return schedule_; }

    /// Geometry of the current subspace as an epoch-0 style record.
    EpochRecord snapshot() const;
    EpochRecord run_epoch();

    /// Switches data order and sampling streams to ones derived from `seed`,
    /// keeping parameters, momentum and the step counter.
    void reseed(std::uint64_t seed);

    /// Indices of the batches of epoch `e` under the current data seed.
    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t e) const;

private:
    NetworkSpec spec_;
    const Dataset* train_;
    TrainConfig config_;
    Subspace subspace_;
    OptimizerState optimizer_;
    std::size_t steps_per_epoch_ = 0;
    LrSchedule schedule_;
    std::uint64_t data_seed_ = 0;
    StepRngs rngs_;
    std::size_t epoch_ = 0;
};

struct TrainResult {
    Subspace subspace;
    std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&, const Subspace&)>;

/// Initializes a subspace from config.seed and trains it for config.epochs.
/// The log starts with an epoch-0 record of the initial geometry.
TrainResult train_run(const NetworkSpec& spec, const Dataset& train, const SubspaceShape& shape,
                      const TrainConfig& config, const EpochCallback& on_epoch = {});

} // namespace lsub
