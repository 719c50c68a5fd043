#pragma once

#include "lsub/data.hpp"
#include "lsub/loss.hpp"
#include "lsub/network.hpp"
#include "lsub/subspace.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lsub {

struct EvalOptions {
    /// Chunk size for batch-norm recomputation passes over the BN data.
    std::size_t bn_batch_size = 128;
    LossKind loss = LossKind::cross_entropy();
    std::size_t ece_bins = 15;
};

Matrix predict_proba(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats, const Matrix& x);

/// Top-1 accuracy; ties go to the lowest class index.
double accuracy_from_probs(const Matrix& probs, std::span<const int> labels);

/// Top-1 accuracy of `params` with already recomputed `stats`.
double accuracy(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats, const Dataset& data);

struct PointEval {
    double accuracy = 0.0;
    double loss = 0.0;
    Matrix probabilities;
};

/// Recomputes BN statistics on `bn_data`, then evaluates on `test`.
PointEval evaluate_params(const NetworkSpec& spec, const ParamVector& params, const Dataset& bn_data,
                          const Dataset& test, const EvalOptions& options = {});

/// Coordinate α along the subspace's natural 1-D path: α itself for
/// Line/Bezier, (1-α)e1 + αe2 for a simplex.
Coordinate path_coord(const SubspaceShape& shape, double alpha);
/// α = 0.5 for Line/Bezier, uniform weights for a simplex.
Coordinate midpoint_coord(const SubspaceShape& shape);

/// `count` evenly spaced values from lo to hi inclusive, computed as lo + i·(hi-lo)/(count-1).
std::vector<double> linspace(double lo, double hi, std::size_t count);
/// Parses "lo:hi:step" into the points lo, lo+step, ..., hi.
std::vector<double> parse_grid(const std::string& spec);

struct SweepRow {
    double alpha = 0.0;
    double accuracy = 0.0;
    double loss = 0.0;
    /// Accuracy of the output ensemble of P(α) and P(1-α).
    double ensemble_accuracy = 0.0;
};

/// Single-model accuracy and loss at each α (BN recomputed per point) and
/// the P(α)/P(1-α) output ensemble. When the grid is mirror-symmetric the
/// partner of point i is point n-1-i, so ensemble(α) = ensemble(1-α) exactly.
std::vector<SweepRow> alpha_sweep(const NetworkSpec& spec, const Subspace& subspace, const Dataset& bn_data,
                                  const Dataset& test, const std::vector<double>& grid, const EvalOptions& options = {});

/// Averages member probabilities, then argmax.
Matrix ensemble_probs(const std::vector<Matrix>& member_probs);

/// Output ensemble of two parameter vectors, BN recomputed per member.
double ensemble_accuracy(const NetworkSpec& spec, const ParamVector& a, const ParamVector& b, const Dataset& bn_data,
                         const Dataset& test, const EvalOptions& options = {});

struct RandomEnsembleResult {
    double ensemble_accuracy = 0.0;
    std::vector<double> member_accuracies;
    double mean_member_accuracy() const;
};

/// Output ensemble of `n_members` points drawn with sample_coord.
RandomEnsembleResult random_simplex_ensemble(const NetworkSpec& spec, const Subspace& subspace, const Dataset& bn_data,
                                             const Dataset& test, std::size_t n_members, Rng& rng,
                                             const EvalOptions& options = {});

/// Expected calibration error with equal-width bins on the max probability.
/// Bin b holds confidences in (b/n, (b+1)/n]; confidence 0 falls in bin 0.
double ece(const Matrix& probs, std::span<const int> labels, std::size_t n_bins = 15);

/// Mean over rows of ½‖p1 − p2‖₁.
double tv_distance(const Matrix& p1, const Matrix& p2);

/// (corrupted − clean) / clean.
double relative_change(double clean_accuracy, double corrupted_accuracy);

struct PlaneGrid {
    /// Orthonormal in-plane basis: u along ω2 − ω1, v the Gram–Schmidt residual of ω3 − ω1.
    ParamVector u;
    ParamVector v;
    /// Projected (x, y) coordinates of ω1, ω2, ω3 (ω1 at the origin).
    std::array<std::array<double, 2>, 3> anchors{};
    struct Cell {
        double x = 0.0;
        double y = 0.0;
        double loss = 0.0;
        double error = 0.0;
    };
    /// Row-major, y outer, x inner.
    std::vector<Cell> cells;
    /// Metrics evaluated exactly at the three anchors.
    std::array<Cell, 3> anchor_cells{};
    std::size_t resolution = 0;
};

/// Loss and error over the plane through three weight vectors.
PlaneGrid plane_grid(const NetworkSpec& spec, const ParamVector& w1, const ParamVector& w2, const ParamVector& w3,
                     const Dataset& bn_data, const Dataset& test, std::size_t resolution, double margin = 0.2,
                     const EvalOptions& options = {});

/// Summary of one trained subspace.
struct EvalReport {
    std::vector<SweepRow> grid;
    double midpoint_accuracy = 0.0;
    double ece = 0.0;
    GeometryStats geometry;
    std::string notes;
};

} // namespace lsub
