#include "lsub/subspace.hpp"

#include "lsub/error.hpp"

#include <cmath>
#include <string>

namespace lsub {

std::size_t SubspaceShape::endpoint_count() const {
    switch (kind) {
    case SubspaceKind::line: return 2;
    case SubspaceKind::bezier: return 3;
    case SubspaceKind::simplex: return simplex_size;
    }
    return 0;
}

std::string SubspaceShape::tag() const {
    switch (kind) {
    case SubspaceKind::line: return "line";
    case SubspaceKind::bezier: return "bezier";
    case SubspaceKind::simplex: return "simplex" + std::to_string(simplex_size);
    }
    return "?";
}

SubspaceShape SubspaceShape::parse(const std::string& tag) {
    if (tag == "line") return line();
    if (tag == "bezier") return bezier();
    if (tag.starts_with("simplex")) {
        const auto digits = tag.substr(7);
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
            const auto m = static_cast<std::size_t>(std::stoull(digits));
            if (m >= 1) return simplex(m);
        }
    }
    throw ConfigError("unknown subspace kind '" + tag + "' (expected line, bezier, simplex<m>)");
}

std::vector<double> coefficients(const SubspaceShape& shape, const Coordinate& coord, Domain domain) {
    switch (shape.kind) {
    case SubspaceKind::line:
    case SubspaceKind::bezier: {
        if (coord.values.size() != 1) throw InputError("line/bezier coordinate must be a scalar");
        const double a = coord.values[0];
        if (!std::isfinite(a) || (domain == Domain::strict && (a < 0.0 || a > 1.0))) {
            throw InputError("alpha " + std::to_string(a) + " outside [0, 1]");
        }
        if (shape.kind == SubspaceKind::line) return {1.0 - a, a};
        return {(1.0 - a) * (1.0 - a), a * a, 2.0 * a * (1.0 - a)};
    }
    case SubspaceKind::simplex: {
        if (coord.values.size() != shape.simplex_size) {
            throw InputError("simplex coordinate has " + std::to_string(coord.values.size()) + " weights, expected " +
                             std::to_string(shape.simplex_size));
        }
        double sum = 0.0;
        for (double w : coord.values) {
            if (!(w >= 0.0)) throw InputError("simplex weight " + std::to_string(w) + " is negative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw InputError("simplex weights sum to " + std::to_string(sum));
        return coord.values;
    }
    }
    return {};
}

Subspace::Subspace(SubspaceShape shape, std::vector<ParamVector> endpoints)
    : shape_(shape), endpoints_(std::move(endpoints)) {
    if (shape_.kind == SubspaceKind::simplex && shape_.simplex_size < 1) {
        throw ConfigError("simplex needs at least one endpoint");
    }
    if (endpoints_.size() != shape_.endpoint_count()) {
        throw ConfigError(shape_.tag() + " needs " + std::to_string(shape_.endpoint_count()) + " endpoints, got " +
                          std::to_string(endpoints_.size()));
    }
    for (const auto& e : endpoints_) require_same_layout(endpoints_.front(), e, "subspace endpoints");
}

Subspace init_subspace(const NetworkSpec& spec, const SubspaceShape& shape, bool point_init, Rng& rng) {
    std::vector<ParamVector> endpoints;
    const std::size_t m = shape.endpoint_count();
    endpoints.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (point_init && i > 0) {
            endpoints.push_back(endpoints.front());
        } else {
            endpoints.push_back(init_params(spec, rng));
        }
    }
    return Subspace(shape, std::move(endpoints));
}

namespace {

void combine_range(std::span<double> out, std::span<const double> coeffs, const std::vector<ParamVector>& endpoints,
                   std::size_t begin, std::size_t end) {
    const auto first = endpoints[0].values();
    for (std::size_t e = begin; e < end; ++e) out[e] = coeffs[0] * first[e];
    for (std::size_t i = 1; i < endpoints.size(); ++i) {
        const auto w = endpoints[i].values();
        const double c = coeffs[i];
        for (std::size_t e = begin; e < end; ++e) out[e] += c * w[e];
    }
}

const Coordinate& coord_for_layer(const LayerwiseCoord& lw, int layer) {
    auto it = lw.layers.find(layer);
    if (it == lw.layers.end()) throw InputError("layerwise coordinate missing layer " + std::to_string(layer));
    return it->second;
}

void check_layerwise_cover(const LayerwiseCoord& lw, const SegmentTable& table) {
    if (lw.layers.size() != table.groups().size()) {
        throw InputError("layerwise coordinate covers " + std::to_string(lw.layers.size()) + " layers, network has " +
                         std::to_string(table.groups().size()));
    }
}

} // namespace

ParamVector eval_point(const Subspace& subspace, const SampleCoord& coord, Domain domain) {
    ParamVector out(subspace.table());
    const auto& table = *subspace.table();
    if (const auto* global = std::get_if<Coordinate>(&coord)) {
        const auto c = coefficients(subspace.shape(), *global, domain);
        combine_range(out.values(), c, subspace.endpoints(), 0, out.size());
        return out;
    }
    const auto& lw = std::get<LayerwiseCoord>(coord);
    check_layerwise_cover(lw, table);
    for (const auto& group : table.groups()) {
        const auto c = coefficients(subspace.shape(), coord_for_layer(lw, group.layer_index), domain);
        combine_range(out.values(), c, subspace.endpoints(), group.begin, group.end);
    }
    return out;
}

Coordinate sample_global_coord(const SubspaceShape& shape, Rng& rng) {
    if (shape.kind != SubspaceKind::simplex) {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        return Coordinate::scalar(uniform(rng));
    }
    const std::size_t m = shape.simplex_size;
    if (m == 1) return Coordinate::weights({1.0});
    std::exponential_distribution<double> exponential(1.0);
    std::vector<double> w(m);
    double sum = 0.0;
    for (double& v : w) {
        v = exponential(rng);
        sum += v;
    }
    for (double& v : w) v /= sum;
    return Coordinate::weights(std::move(w));
}

LayerwiseCoord broadcast(const Coordinate& coord, const SegmentTable& table) {
    LayerwiseCoord lw;
    for (const auto& group : table.groups()) lw.layers[group.layer_index] = coord;
    return lw;
}

SampleCoord sample_coord(const SubspaceShape& shape, const SegmentTable& table, bool layerwise, Rng& rng) {
    if (!layerwise) return sample_global_coord(shape, rng);
    LayerwiseCoord lw;
    for (const auto& group : table.groups()) lw.layers[group.layer_index] = sample_global_coord(shape, rng);
    return lw;
}

std::vector<ParamVector> route_gradient(const Subspace& subspace, const SampleCoord& coord,
                                        const ParamVector& grad_theta, Domain domain) {
    require_same_layout(subspace.endpoint(0), grad_theta, "route_gradient");
    const std::size_t m = subspace.size();
    std::vector<ParamVector> grads(m, ParamVector(subspace.table()));
    const auto g = grad_theta.values();
    auto scale_range = [&](std::span<const double> c, std::size_t begin, std::size_t end) {
        for (std::size_t i = 0; i < m; ++i) {
            auto out = grads[i].values();
            for (std::size_t e = begin; e < end; ++e) out[e] = c[i] * g[e];
        }
    };
    if (const auto* global = std::get_if<Coordinate>(&coord)) {
        scale_range(coefficients(subspace.shape(), *global, domain), 0, grad_theta.size());
        return grads;
    }
    const auto& lw = std::get<LayerwiseCoord>(coord);
    check_layerwise_cover(lw, *subspace.table());
    for (const auto& group : subspace.table()->groups()) {
        scale_range(coefficients(subspace.shape(), coord_for_layer(lw, group.layer_index), domain), group.begin,
                    group.end);
    }
    return grads;
}

CosineReg cosine_reg(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "cosine_reg");
    const double na = masked_squared_norm(a);
    const double nb = masked_squared_norm(b);
    if (!(na > 0.0)) throw NumericError("cosine_reg: first vector has zero norm outside batch-norm parameters");
    if (!(nb > 0.0)) throw NumericError("cosine_reg: second vector has zero norm outside batch-norm parameters");
    const double d = masked_dot(a, b);
    CosineReg out{d * d / (na * nb), ParamVector(a.table()), ParamVector(b.table())};
    // d/da [d²/(na nb)] = 2d/(na nb) · b − 2d²/(na² nb) · a
    const double k = 2.0 * d / (na * nb);
    const auto& mask = a.table()->bn_mask();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask[i]) continue;
        out.grad_a[i] = k * (b[i] - d / na * a[i]);
        out.grad_b[i] = k * (a[i] - d / nb * b[i]);
    }
    return out;
}

std::optional<std::pair<std::size_t, std::size_t>> pair_sample(std::size_t m, Rng& rng) {
    if (m < 2) return std::nullopt;
    std::uniform_int_distribution<std::size_t> first(0, m - 1);
    std::uniform_int_distribution<std::size_t> second(0, m - 2);
    const std::size_t j = first(rng);
    std::size_t k = second(rng);
    if (k >= j) ++k;
    return std::make_pair(std::min(j, k), std::max(j, k));
}

GeometryStats geometry_stats(const Subspace& subspace) {
    GeometryStats stats;
    const std::size_t m = subspace.size();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const auto& a = subspace.endpoint(i);
            const auto& b = subspace.endpoint(j);
            const double na = masked_squared_norm(a);
            const double nb = masked_squared_norm(b);
            const double d = masked_dot(a, b);
            const double cos2 = (na > 0.0 && nb > 0.0) ? d * d / (na * nb) : 0.0;
            stats.pairs.push_back({i, j, masked_distance(a, b), cos2});
        }
    }
    if (!stats.pairs.empty()) {
        for (const auto& p : stats.pairs) {
            stats.mean_l2 += p.l2;
            stats.mean_cos2 += p.cos2;
        }
        stats.mean_l2 /= static_cast<double>(stats.pairs.size());
        stats.mean_cos2 /= static_cast<double>(stats.pairs.size());
    }
    return stats;
}

void save_subspace(const std::filesystem::path& manifest, const NetworkSpec& spec, const Subspace& subspace,
                   const std::map<std::string, std::string>& extra) {
    save_checkpoint(manifest, Checkpoint{spec, subspace.shape().tag(), subspace.endpoints(), extra});
}

LoadedSubspace load_subspace(const std::filesystem::path& manifest) {
    Checkpoint ckpt = load_checkpoint(manifest);
    SubspaceShape shape = ckpt.kind == "params" ? SubspaceShape::simplex(1) : SubspaceShape::parse(ckpt.kind);
    return LoadedSubspace{ckpt.spec, Subspace(shape, std::move(ckpt.vectors)), std::move(ckpt.extra)};
}

} // namespace lsub
