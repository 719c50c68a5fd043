#pragma once

#include "lsub/checkpoint.hpp"
#include "lsub/network.hpp"
#include "lsub/param_vector.hpp"
#include "lsub/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lsub {

enum class SubspaceKind { line, bezier, simplex };

/// Kind plus endpoint count: Line has 2, Bezier has 3 (ω1, ω2, control ω3),
/// Simplex has m >= 1.
struct SubspaceShape {
    SubspaceKind kind = SubspaceKind::line;
    std::size_t simplex_size = 2;

    static SubspaceShape line() { return {SubspaceKind::line, 2}; }
    static SubspaceShape bezier() { return {SubspaceKind::bezier, 3}; }
    static SubspaceShape simplex(std::size_t m) { return {SubspaceKind::simplex, m}; }

    std::size_t endpoint_count() const;
    /// "line", "bezier", or "simplex<m>".
    std::string tag() const;
    static SubspaceShape parse(const std::string& tag);

    friend bool operator==(const SubspaceShape&, const SubspaceShape&) = default;
};

/// A point of the domain of one (non-layerwise) parameterization: the scalar
/// α for Line/Bezier, the simplex weights for Simplex.
struct Coordinate {
    std::vector<double> values;

    static Coordinate scalar(double alpha) { return {{alpha}}; }
    static Coordinate weights(std::vector<double> w) { return {std::move(w)}; }
    double alpha() const { return values.at(0); }
    friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

/// One coordinate per layer group, keyed by layer index.
struct LayerwiseCoord {
    std::map<int, Coordinate> layers;
    friend bool operator==(const LayerwiseCoord&, const LayerwiseCoord&) = default;
};

using SampleCoord = std::variant<Coordinate, LayerwiseCoord>;

/// Whether Line/Bezier α may leave [0, 1]. Only the integral model and
/// off-line interpolation use extrapolation.
enum class Domain { strict, extrapolate };

/// Mixing weights of the endpoints at `coord`, in endpoint order
/// (Bezier: ω1, ω2, ω3). Non-negative and summing to one inside the domain.
std::vector<double> coefficients(const SubspaceShape& shape, const Coordinate& coord,
                                 Domain domain = Domain::strict);

class Subspace {
public:
    Subspace(SubspaceShape shape, std::vector<ParamVector> endpoints);

    const SubspaceShape& shape() const { return shape_; }
    std::size_t size() const { return endpoints_.size(); }
    const std::vector<ParamVector>& endpoints() const { return endpoints_; }
    std::vector<ParamVector>& endpoints() { return endpoints_; }
    const ParamVector& endpoint(std::size_t i) const { return endpoints_.at(i); }
    ParamVector& endpoint(std::size_t i) { return endpoints_.at(i); }
    const SegmentTablePtr& table() const { return endpoints_.front().table(); }

private:
    SubspaceShape shape_;
    std::vector<ParamVector> endpoints_;
};

/// Independent Kaiming draws per endpoint, or one draw replicated when point_init.
Subspace init_subspace(const NetworkSpec& spec, const SubspaceShape& shape, bool point_init, Rng& rng);

/// P(coord) = Σ c_i ω_i, per layer group in layerwise mode.
ParamVector eval_point(const Subspace& subspace, const SampleCoord& coord, Domain domain = Domain::strict);

/// Uniform draw from the domain: α ~ U[0,1] for Line/Bezier, normalized unit
/// exponentials for Simplex. Layerwise draws one coordinate per layer group.
SampleCoord sample_coord(const SubspaceShape& shape, const SegmentTable& table, bool layerwise, Rng& rng);
Coordinate sample_global_coord(const SubspaceShape& shape, Rng& rng);

/// The coordinate that gives every layer group `coord`.
LayerwiseCoord broadcast(const Coordinate& coord, const SegmentTable& table);

/// Gradient of the loss w.r.t. each endpoint given ∂ℓ/∂θ at θ = P(coord).
std::vector<ParamVector> route_gradient(const Subspace& subspace, const SampleCoord& coord,
                                        const ParamVector& grad_theta, Domain domain = Domain::strict);

struct CosineReg {
    double value = 0.0;
    ParamVector grad_a;
    ParamVector grad_b;
};

/// Squared cosine similarity over the non-batch-norm coordinates and its
/// exact gradient (zero on batch-norm coordinates).
CosineReg cosine_reg(const ParamVector& a, const ParamVector& b);

/// An unordered pair of distinct endpoint indices, uniformly, or nullopt when m < 2.
std::optional<std::pair<std::size_t, std::size_t>> pair_sample(std::size_t m, Rng& rng);

struct GeometryStats {
    struct Pair {
        std::size_t i = 0;
        std::size_t j = 0;
        double l2 = 0.0;
        double cos2 = 0.0;
    };
    std::vector<Pair> pairs;
    double mean_l2 = 0.0;
    double mean_cos2 = 0.0;
};

/// Pairwise L2 distance and squared cosine over the non-batch-norm mask.
GeometryStats geometry_stats(const Subspace& subspace);

void save_subspace(const std::filesystem::path& manifest, const NetworkSpec& spec, const Subspace& subspace,
                   const std::map<std::string, std::string>& extra = {});

struct LoadedSubspace {
    NetworkSpec spec;
    Subspace subspace;
    std::map<std::string, std::string> extra;
};
LoadedSubspace load_subspace(const std::filesystem::path& manifest);

} // namespace lsub
