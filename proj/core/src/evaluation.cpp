#include "lsub/evaluation.hpp"

#include "lsub/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lsub {

namespace {
constexpr std::size_t kEvalChunk = 1024;

std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Matrix logits_in_chunks(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats, const Matrix& x) {
    Matrix logits(x.rows(), spec.num_classes());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < x.rows(); start += kEvalChunk) {
        const std::size_t stop = std::min(x.rows(), start + kEvalChunk);
        rows.resize(stop - start);
        for (std::size_t i = start; i < stop; ++i) rows[i - start] = i;
        const auto out = forward(spec, params, stats, x.gather_rows(rows), ForwardMode::eval);
        std::copy(out.logits.data().begin(), out.logits.data().end(),
                  logits.data().begin() + static_cast<std::ptrdiff_t>(start * spec.num_classes()));
    }
    return logits;
}

void require_nonempty(const Dataset& data, const char* what) {
    if (data.size() == 0) throw InputError(std::string(what) + ": empty dataset");
}
} // namespace

Matrix predict_proba(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats, const Matrix& x) {
    return softmax(logits_in_chunks(spec, params, stats, x));
}

double accuracy_from_probs(const Matrix& probs, std::span<const int> labels) {
    if (probs.rows() != labels.size()) throw ConfigError("accuracy: prediction and label counts differ");
    if (labels.empty()) throw InputError("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        if (static_cast<int>(argmax(probs.row(r))) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats, const Dataset& data) {
    require_nonempty(data, "accuracy");
    return accuracy_from_probs(predict_proba(spec, params, stats, data.inputs), data.labels);
}

PointEval evaluate_params(const NetworkSpec& spec, const ParamVector& params, const Dataset& bn_data,
                          const Dataset& test, const EvalOptions& options) {
    require_nonempty(test, "evaluate");
    const BNStats stats = recompute_bn_stats(spec, params, bn_data.inputs, options.bn_batch_size);
    const Matrix logits = logits_in_chunks(spec, params, stats, test.inputs);
    PointEval out;
    out.loss = loss(logits, test.labels, options.loss);
    out.probabilities = softmax(logits);
    out.accuracy = accuracy_from_probs(out.probabilities, test.labels);
    return out;
}

Coordinate path_coord(const SubspaceShape& shape, double alpha) {
    if (shape.kind != SubspaceKind::simplex) return Coordinate::scalar(alpha);
    if (shape.simplex_size < 2) throw InputError("a one-point simplex has no path");
    std::vector<double> w(shape.simplex_size, 0.0);
    w[0] = 1.0 - alpha;
    w[1] = alpha;
    return Coordinate::weights(std::move(w));
}

Coordinate midpoint_coord(const SubspaceShape& shape) {
    if (shape.kind != SubspaceKind::simplex) return Coordinate::scalar(0.5);
    const double w = 1.0 / static_cast<double>(shape.simplex_size);
    return Coordinate::weights(std::vector<double>(shape.simplex_size, w));
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    if (count == 0) return {};
    if (count == 1) return {lo};
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(count - 1);
    }
    out.back() = hi;
    return out;
}

std::vector<double> parse_grid(const std::string& spec) {
    std::istringstream in(spec);
    std::string a, b, c;
    if (!std::getline(in, a, ':') || !std::getline(in, b, ':') || !std::getline(in, c) ) {
        throw InputError("grid '" + spec + "' must have the form lo:hi:step");
    }
    double lo = 0, hi = 0, step = 0;
    try {
        lo = std::stod(a);
        hi = std::stod(b);
        step = std::stod(c);
    } catch (const std::exception&) {
        throw InputError("grid '" + spec + "' has a non-numeric field");
    }
    if (!(step > 0.0) || !(hi >= lo)) throw InputError("grid '" + spec + "' needs step > 0 and hi >= lo");
    const double intervals = (hi - lo) / step;
    const auto n = static_cast<std::size_t>(std::llround(intervals));
    if (std::abs(intervals - static_cast<double>(n)) > 1e-9) {
        throw InputError("grid '" + spec + "': step does not divide the range");
    }
    return linspace(lo, hi, n + 1);
}

Matrix ensemble_probs(const std::vector<Matrix>& member_probs) {
    if (member_probs.empty()) throw InputError("ensemble of zero members");
    Matrix out = member_probs.front();
    for (std::size_t i = 1; i < member_probs.size(); ++i) {
        if (member_probs[i].rows() != out.rows() || member_probs[i].cols() != out.cols()) {
            throw ConfigError("ensemble members disagree in shape");
        }
        for (std::size_t e = 0; e < out.data().size(); ++e) out.data()[e] += member_probs[i].data()[e];
    }
    const double inv = 1.0 / static_cast<double>(member_probs.size());
    for (double& v : out.data()) v *= inv;
    return out;
}

std::vector<SweepRow> alpha_sweep(const NetworkSpec& spec, const Subspace& subspace, const Dataset& bn_data,
                                  const Dataset& test, const std::vector<double>& grid, const EvalOptions& options) {
    require_nonempty(test, "alpha_sweep");
    if (!std::is_sorted(grid.begin(), grid.end())) throw InputError("alpha_sweep: grid must be sorted");
    const std::size_t n = grid.size();
    std::vector<PointEval> points;
    points.reserve(n);
    for (double a : grid) {
        points.push_back(evaluate_params(spec, eval_point(subspace, path_coord(subspace.shape(), a)), bn_data, test,
                                         options));
    }
    bool mirrored = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(grid[i] + grid[n - 1 - i] - 1.0) > 1e-12) mirrored = false;
    }
    std::vector<SweepRow> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].alpha = grid[i];
        rows[i].accuracy = points[i].accuracy;
        rows[i].loss = points[i].loss;
        Matrix partner;
        if (mirrored) {
            partner = points[n - 1 - i].probabilities;
        } else {
            const auto p = eval_point(subspace, path_coord(subspace.shape(), 1.0 - grid[i]));
            partner = evaluate_params(spec, p, bn_data, test, options).probabilities;
        }
        rows[i].ensemble_accuracy = accuracy_from_probs(ensemble_probs({points[i].probabilities, partner}), test.labels);
    }
    return rows;
}

double ensemble_accuracy(const NetworkSpec& spec, const ParamVector& a, const ParamVector& b, const Dataset& bn_data,
                         const Dataset& test, const EvalOptions& options) {
    const auto pa = evaluate_params(spec, a, bn_data, test, options);
    const auto pb = evaluate_params(spec, b, bn_data, test, options);
    return accuracy_from_probs(ensemble_probs({pa.probabilities, pb.probabilities}), test.labels);
}

double RandomEnsembleResult::mean_member_accuracy() const {
    if (member_accuracies.empty()) return 0.0;
    double s = 0.0;
    for (double a : member_accuracies) s += a;
    return s / static_cast<double>(member_accuracies.size());
}

RandomEnsembleResult random_simplex_ensemble(const NetworkSpec& spec, const Subspace& subspace, const Dataset& bn_data,
                                             const Dataset& test, std::size_t n_members, Rng& rng,
                                             const EvalOptions& options) {
    if (subspace.shape().kind != SubspaceKind::simplex) throw InputError("random_simplex_ensemble needs a simplex");
    if (n_members == 0) throw InputError("random_simplex_ensemble needs at least one member");
    RandomEnsembleResult out;
    std::vector<Matrix> probs;
    for (std::size_t i = 0; i < n_members; ++i) {
        const auto coord = sample_global_coord(subspace.shape(), rng);
        auto eval = evaluate_params(spec, eval_point(subspace, coord), bn_data, test, options);
        out.member_accuracies.push_back(eval.accuracy);
        probs.push_back(std::move(eval.probabilities));
    }
    out.ensemble_accuracy = accuracy_from_probs(ensemble_probs(probs), test.labels);
    return out;
}

double ece(const Matrix& probs, std::span<const int> labels, std::size_t n_bins) {
    if (n_bins == 0) throw InputError("ece: need at least one bin");
    if (probs.rows() != labels.size()) throw InputError("ece: prediction and label counts differ");
    if (labels.empty()) throw InputError("ece: no samples");
    struct Sample {
        double confidence;
        int correct;
    };
    std::vector<Sample> samples;
    samples.reserve(labels.size());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0 && p <= 1.0)) throw InputError("ece: row " + std::to_string(r) + " has a value outside [0, 1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InputError("ece: row " + std::to_string(r) + " does not sum to 1");
        const auto top = argmax(row);
        samples.push_back({row[top], static_cast<int>(top) == labels[r] ? 1 : 0});
    }
    // Sorting makes the floating-point sums independent of input order.
    std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        return a.confidence < b.confidence || (a.confidence == b.confidence && a.correct < b.correct);
    });
    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<std::size_t> correct(n_bins, 0), count(n_bins, 0);
    for (const auto& s : samples) {
        const double scaled = std::ceil(s.confidence * static_cast<double>(n_bins));
        std::size_t bin = scaled <= 1.0 ? 0 : static_cast<std::size_t>(scaled) - 1;
        bin = std::min(bin, n_bins - 1);
        conf_sum[bin] += s.confidence;
        correct[bin] += static_cast<std::size_t>(s.correct);
        ++count[bin];
    }
    const double n = static_cast<double>(samples.size());
    double total = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (count[b] == 0) continue;
        const double cb = static_cast<double>(count[b]);
        const double acc = static_cast<double>(correct[b]) / cb;
        const double conf = conf_sum[b] / cb;
        total += cb / n * std::abs(acc - conf);
    }
    return total;
}

double tv_distance(const Matrix& p1, const Matrix& p2) {
    if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) throw InputError("tv_distance: shape mismatch");
    if (p1.rows() == 0) throw InputError("tv_distance: no rows");
    double total = 0.0;
    for (std::size_t r = 0; r < p1.rows(); ++r) {
        double l1 = 0.0;
        for (std::size_t c = 0; c < p1.cols(); ++c) l1 += std::abs(p1(r, c) - p2(r, c));
        total += 0.5 * l1;
    }
    return total / static_cast<double>(p1.rows());
}

double relative_change(double clean_accuracy, double corrupted_accuracy) {
    if (!(clean_accuracy > 0.0)) throw InputError("relative_change: clean accuracy must be positive");
    return (corrupted_accuracy - clean_accuracy) / clean_accuracy;
}

PlaneGrid plane_grid(const NetworkSpec& spec, const ParamVector& w1, const ParamVector& w2, const ParamVector& w3,
                     const Dataset& bn_data, const Dataset& test, std::size_t resolution, double margin,
                     const EvalOptions& options) {
    require_same_layout(w1, w2, "plane_grid");
    require_same_layout(w1, w3, "plane_grid");
    if (resolution < 2) throw InputError("plane_grid: resolution must be at least 2");
    if (!(margin >= 0.0)) throw InputError("plane_grid: margin must be non-negative");

    PlaneGrid grid;
    ParamVector d2 = w2 - w1;
    ParamVector d3 = w3 - w1;
    const double len2 = std::sqrt(dot(d2, d2));
    const double len3 = std::sqrt(dot(d3, d3));
    if (!(len2 > 0.0) || !(len3 > 0.0)) throw NumericError("plane_grid: degenerate basis (coincident points)");
    grid.u = (1.0 / len2) * d2;
    const double proj = dot(d3, grid.u);
    ParamVector r = d3;
    r.axpy(-proj, grid.u);
    const double rnorm = std::sqrt(dot(r, r));
    if (!(rnorm > 1e-12 * len3)) throw NumericError("plane_grid: degenerate basis (collinear points)");
    grid.v = (1.0 / rnorm) * r;
    grid.anchors = {{{0.0, 0.0}, {len2, 0.0}, {proj, rnorm}}};
    grid.resolution = resolution;

    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
    for (const auto& a : grid.anchors) {
        xmin = std::min(xmin, a[0]);
        xmax = std::max(xmax, a[0]);
        ymin = std::min(ymin, a[1]);
        ymax = std::max(ymax, a[1]);
    }
    const double wx = xmax - xmin;
    const double wy = ymax - ymin;
    const auto xs = linspace(xmin - margin * wx, xmax + margin * wx, resolution);
    const auto ys = linspace(ymin - margin * wy, ymax + margin * wy, resolution);

    auto evaluate_at = [&](double x, double y) {
        ParamVector theta = w1;
        auto t = theta.values();
        const auto u = grid.u.values();
        const auto v = grid.v.values();
        for (std::size_t e = 0; e < t.size(); ++e) t[e] = t[e] + x * u[e] + y * v[e];
        const auto eval = evaluate_params(spec, theta, bn_data, test, options);
        return PlaneGrid::Cell{x, y, eval.loss, 1.0 - eval.accuracy};
    };
    grid.cells.reserve(resolution * resolution);
    for (double y : ys) {
        for (double x : xs) grid.cells.push_back(evaluate_at(x, y));
    }
    for (std::size_t i = 0; i < 3; ++i) grid.anchor_cells[i] = evaluate_at(grid.anchors[i][0], grid.anchors[i][1]);
    return grid;
}

} // namespace lsub
