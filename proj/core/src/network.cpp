#include "lsub/network.hpp"

#include "lsub/error.hpp"

#include <cmath>
#include <cctype>
#include <sstream>
#include <string>

namespace lsub {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string layer_name(const LayerDesc& layer) {
    return std::visit(overloaded{
                          [](const DenseLayer& d) {
                              return "dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")";
                          },
                          [](const BatchNormLayer& b) { return "batch_norm(" + std::to_string(b.width) + ")"; },
                          [](const ReluLayer&) { return std::string("relu"); },
                          [](const SoftmaxHead&) { return std::string("softmax_head"); },
                      },
                      layer);
}

} // namespace

NetworkSpec::NetworkSpec(std::vector<LayerDesc> layers, std::size_t input_dim, std::size_t num_classes)
    : layers_(std::move(layers)), input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim_ == 0) throw ConfigError("network input_dim must be positive");
    if (num_classes_ == 0) throw ConfigError("network num_classes must be positive");

    std::vector<Segment> segments;
    std::size_t width = input_dim_;
    std::size_t offset = 0;
    bool have_dense = false;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto where = "layer " + std::to_string(li) + " (" + layer_name(layers_[li]) + ")";
        const int index = static_cast<int>(li);
        std::visit(overloaded{
                       [&](const DenseLayer& d) {
                           if (d.in != width) {
                               throw ConfigError(where + ": expects input width " + std::to_string(d.in) +
                                                 " but receives " + std::to_string(width));
                           }
                           if (d.out == 0) throw ConfigError(where + ": zero output width");
                           segments.push_back({index, SegmentKind::dense_weight, offset, d.in * d.out});
                           offset += d.in * d.out;
                           segments.push_back({index, SegmentKind::dense_bias, offset, d.out});
                           offset += d.out;
                           width = d.out;
                           final_dense_ = li;
                           have_dense = true;
                       },
                       [&](const BatchNormLayer& b) {
                           if (b.width != width) {
                               throw ConfigError(where + ": width " + std::to_string(b.width) +
                                                 " but receives " + std::to_string(width));
                           }
                           segments.push_back({index, SegmentKind::bn_gain, offset, b.width});
                           offset += b.width;
                           segments.push_back({index, SegmentKind::bn_shift, offset, b.width});
                           offset += b.width;
                           bn_layers_.push_back(li);
                       },
                       [&](const ReluLayer&) {},
                       [&](const SoftmaxHead&) {
                           if (li + 1 != layers_.size()) throw ConfigError(where + ": softmax_head must be last");
                       },
                   },
                   layers_[li]);
    }
    if (!have_dense) throw ConfigError("network needs at least one dense layer");
    if (width != num_classes_) {
        throw ConfigError("network output width " + std::to_string(width) + " != num_classes " +
                          std::to_string(num_classes_));
    }
    table_ = std::make_shared<const SegmentTable>(std::move(segments));
}

NetworkSpec NetworkSpec::mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                             std::size_t num_classes, bool batch_norm) {
    std::vector<LayerDesc> layers;
    std::size_t width = input_dim;
    for (std::size_t h : hidden) {
        layers.emplace_back(DenseLayer{width, h});
        if (batch_norm) layers.emplace_back(BatchNormLayer{h});
        layers.emplace_back(ReluLayer{});
        width = h;
    }
    layers.emplace_back(DenseLayer{width, num_classes});
    layers.emplace_back(SoftmaxHead{});
    return NetworkSpec(std::move(layers), input_dim, num_classes);
}

NetworkSpec NetworkSpec::parse(const std::string& text, std::size_t input_dim, std::size_t num_classes) {
    std::vector<LayerDesc> layers;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        auto open = token.find('(');
        std::string name = token.substr(0, open);
        std::vector<std::size_t> args;
        if (open != std::string::npos) {
            if (token.back() != ')') throw ConfigError("malformed layer token '" + token + "'");
            std::string inner = token.substr(open + 1, token.size() - open - 2);
            std::istringstream parts(inner);
            std::string part;
            while (std::getline(parts, part, ',')) {
                try {
                    args.push_back(static_cast<std::size_t>(std::stoull(part)));
                } catch (const std::exception&) {
                    throw ConfigError("malformed layer argument in '" + token + "'");
                }
            }
        }
        if (name == "dense" && args.size() == 2) {
            layers.emplace_back(DenseLayer{args[0], args[1]});
        } else if (name == "batch_norm" && args.size() == 1) {
            layers.emplace_back(BatchNormLayer{args[0]});
        } else if (name == "relu" && args.empty()) {
            layers.emplace_back(ReluLayer{});
        } else if (name == "softmax_head" && args.empty()) {
            layers.emplace_back(SoftmaxHead{});
        } else {
            throw ConfigError("unknown layer '" + token + "'");
        }
    }
    return NetworkSpec(std::move(layers), input_dim, num_classes);
}

std::string NetworkSpec::to_string() const {
    std::string out;
    for (const auto& layer : layers_) {
        if (!out.empty()) out += ' ';
        out += layer_name(layer);
    }
    return out;
}

std::size_t NetworkSpec::feature_width() const {
    return std::get<DenseLayer>(layers_[final_dense_]).in;
}

ParamVector init_params(const NetworkSpec& spec, Rng& rng) {
    ParamVector p(spec.table());
    for (const auto& seg : spec.table()->segments()) {
        auto values = p.segment(seg);
        switch (seg.kind) {
        case SegmentKind::dense_weight: {
            const auto& dense = std::get<DenseLayer>(spec.layers()[static_cast<std::size_t>(seg.layer_index)]);
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(dense.in)));
            for (double& v : values) v = normal(rng);
            break;
        }
        case SegmentKind::dense_bias:
        case SegmentKind::bn_shift:
            std::fill(values.begin(), values.end(), 0.0);
            break;
        case SegmentKind::bn_gain:
            std::fill(values.begin(), values.end(), 1.0);
            break;
        }
    }
    return p;
}

namespace {

struct BatchNormCache {
    Matrix xhat;
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;
};

struct Tape {
    std::vector<Matrix> inputs;          // input of each layer
    std::vector<BatchNormCache> bn;      // indexed by layer
    Matrix output;
};

void check_inputs(const NetworkSpec& spec, const ParamVector& params, const Matrix& x) {
    if (!params.table() || !(*params.table() == *spec.table())) {
        throw ConfigError("parameter vector does not match network segment table");
    }
    if (x.cols() != spec.input_dim()) {
        throw ConfigError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                          std::to_string(spec.input_dim()));
    }
}

void check_finite(const Matrix& m, std::size_t layer) {
    for (double v : m.data()) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite activation at layer " + std::to_string(layer));
        }
    }
}

const Segment& segment_of(const ParamVector& p, std::size_t layer, SegmentKind kind) {
    for (const auto& s : p.table()->segments()) {
        if (s.layer_index == static_cast<int>(layer) && s.kind == kind) return s;
    }
    throw ConfigError("missing segment for layer " + std::to_string(layer));
}

Matrix dense_forward(const Matrix& x, std::span<const double> w, std::span<const double> b, std::size_t out) {
    const std::size_t in = x.cols();
    Matrix y(x.rows(), out);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto yr = y.row(r);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w.data() + o * in;
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
            yr[o] = acc + b[o];
        }
    }
    return y;
}

Matrix run_forward(const NetworkSpec& spec, const ParamVector& params, const BNStats* stats,
                   const Matrix& x, ForwardMode mode, Tape* tape, Matrix* features, bool finite_checks) {
    check_inputs(spec, params, x);
    if (mode == ForwardMode::eval && spec.batch_norm_count() > 0) {
        if (!stats || stats->empty()) throw StateError("eval-mode forward needs recomputed batch-norm statistics");
        if (stats->layers.size() != spec.batch_norm_count()) {
            throw StateError("batch-norm statistics do not match network");
        }
    }
    if (mode == ForwardMode::train && x.rows() == 0) throw InputError("empty batch");

    Matrix h = x;
    if (tape) {
        tape->inputs.assign(spec.layers().size(), Matrix{});
        tape->bn.assign(spec.layers().size(), BatchNormCache{});
    }
    std::size_t bn_ordinal = 0;
    for (std::size_t li = 0; li < spec.layers().size(); ++li) {
        if (li == spec.final_dense_index() && features) *features = h;
        if (tape) tape->inputs[li] = h;
        std::visit(overloaded{
                       [&](const DenseLayer& d) {
                           const auto& ws = segment_of(params, li, SegmentKind::dense_weight);
                           const auto& bs = segment_of(params, li, SegmentKind::dense_bias);
                           h = dense_forward(h, params.segment(ws), params.segment(bs), d.out);
                       },
                       [&](const BatchNormLayer& bn) {
                           auto gain = params.segment(segment_of(params, li, SegmentKind::bn_gain));
                           auto shift = params.segment(segment_of(params, li, SegmentKind::bn_shift));
                           const std::size_t rows = h.rows();
                           BatchNormCache cache;
                           cache.mean.assign(bn.width, 0.0);
                           cache.var.assign(bn.width, 0.0);
                           cache.inv_std.assign(bn.width, 0.0);
                           if (mode == ForwardMode::train) {
                               const double inv_n = 1.0 / static_cast<double>(rows);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < bn.width; ++c) cache.mean[c] += h(r, c);
                               for (double& m : cache.mean) m *= inv_n;
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < bn.width; ++c) {
                                       const double d = h(r, c) - cache.mean[c];
                                       cache.var[c] += d * d;
                                   }
                               for (double& v : cache.var) v *= inv_n;
                           } else {
                               const auto& layer_stats = stats->layers[bn_ordinal];
                               cache.mean = layer_stats.running_mean;
                               cache.var = layer_stats.running_var;
                           }
                           for (std::size_t c = 0; c < bn.width; ++c) {
                               cache.inv_std[c] = 1.0 / std::sqrt(cache.var[c] + kBatchNormEpsilon);
                           }
                           cache.xhat = Matrix(rows, bn.width);
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < bn.width; ++c) {
                                   const double xh = (h(r, c) - cache.mean[c]) * cache.inv_std[c];
                                   cache.xhat(r, c) = xh;
                                   h(r, c) = gain[c] * xh + shift[c];
                               }
                           }
                           if (tape) tape->bn[li] = std::move(cache);
                           ++bn_ordinal;
                       },
                       [&](const ReluLayer&) {
                           for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
                       },
                       [&](const SoftmaxHead&) {},
                   },
                   spec.layers()[li]);
        if (finite_checks) check_finite(h, li);
    }
    if (tape) tape->output = h;
    return h;
}

ParamVector run_backward(const NetworkSpec& spec, const ParamVector& params, const Tape& tape,
                         Matrix grad, const Matrix* feature_grad) {
    ParamVector g(params.table());
    for (std::size_t li = spec.layers().size(); li-- > 0;) {
        const Matrix& x = tape.inputs[li];
        std::visit(overloaded{
                       [&](const DenseLayer& d) {
                           const auto& ws = segment_of(params, li, SegmentKind::dense_weight);
                           const auto& bs = segment_of(params, li, SegmentKind::dense_bias);
                           auto w = params.segment(ws);
                           auto gw = g.segment(ws);
                           auto gb = g.segment(bs);
                           Matrix dx(x.rows(), d.in);
                           for (std::size_t r = 0; r < x.rows(); ++r) {
                               auto xr = x.row(r);
                               auto dxr = dx.row(r);
                               for (std::size_t o = 0; o < d.out; ++o) {
                                   const double dy = grad(r, o);
                                   gb[o] += dy;
                                   double* gwo = gw.data() + o * d.in;
                                   const double* wo = w.data() + o * d.in;
                                   for (std::size_t i = 0; i < d.in; ++i) {
                                       gwo[i] += dy * xr[i];
                                       dxr[i] += dy * wo[i];
                                   }
                               }
                           }
                           grad = std::move(dx);
                       },
                       [&](const BatchNormLayer& bn) {
                           const auto& gs = segment_of(params, li, SegmentKind::bn_gain);
                           const auto& ss = segment_of(params, li, SegmentKind::bn_shift);
                           auto gain = params.segment(gs);
                           auto ggain = g.segment(gs);
                           auto gshift = g.segment(ss);
                           const auto& cache = tape.bn[li];
                           const std::size_t rows = x.rows();
                           const double n = static_cast<double>(rows);
                           Matrix dx(rows, bn.width);
                           for (std::size_t c = 0; c < bn.width; ++c) {
                               double sum_dxhat = 0.0;
                               double sum_dxhat_xhat = 0.0;
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const double dy = grad(r, c);
                                   ggain[c] += dy * cache.xhat(r, c);
                                   gshift[c] += dy;
                                   const double dxhat = dy * gain[c];
                                   sum_dxhat += dxhat;
                                   sum_dxhat_xhat += dxhat * cache.xhat(r, c);
                               }
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const double dxhat = grad(r, c) * gain[c];
                                   dx(r, c) = cache.inv_std[c] / n *
                                              (n * dxhat - sum_dxhat - cache.xhat(r, c) * sum_dxhat_xhat);
                               }
                           }
                           grad = std::move(dx);
                       },
                       [&](const ReluLayer&) {
                           for (std::size_t i = 0; i < grad.data().size(); ++i) {
                               if (!(x.data()[i] > 0.0)) grad.data()[i] = 0.0;
                           }
                       },
                       [&](const SoftmaxHead&) {},
                   },
                   spec.layers()[li]);
        if (li == spec.final_dense_index() && feature_grad) {
            if (feature_grad->rows() != grad.rows() || feature_grad->cols() != grad.cols()) {
                throw ConfigError("feature gradient shape does not match features");
            }
            for (std::size_t i = 0; i < grad.data().size(); ++i) grad.data()[i] += feature_grad->data()[i];
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
            for (const auto& s : g.table()->segments()) {
                if (i >= s.offset && i < s.offset + s.length) {
                    throw NumericError("non-finite gradient at layer " + std::to_string(s.layer_index));
                }
            }
        }
    }
    return g;
}

} // namespace

ForwardOutput forward(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats,
                      const Matrix& x, ForwardMode mode) {
    ForwardOutput out;
    out.logits = run_forward(spec, params, &stats, x, mode, nullptr, &out.features, false);
    return out;
}

BackwardResult backward(const NetworkSpec& spec, const ParamVector& params, const Matrix& x,
                        std::span<const int> labels, const LossKind& loss_kind,
                        const BackwardOptions& options) {
    Tape tape;
    BackwardResult out;
    out.logits = run_forward(spec, params, nullptr, x, ForwardMode::train, &tape, &out.features, true);
    LossValue lv = loss_with_grad(out.logits, labels, loss_kind);
    if (!std::isfinite(lv.value)) throw NumericError("non-finite loss at output layer");
    out.loss = lv.value;
    if (options.loss_scale != 1.0) {
        for (double& v : lv.grad.data()) v *= options.loss_scale;
    }
    out.grad = run_backward(spec, params, tape, std::move(lv.grad), options.feature_grad);
    return out;
}

ParamVector backward_from_logits(const NetworkSpec& spec, const ParamVector& params, const Matrix& x,
                                 const Matrix& logit_grad, const Matrix* feature_grad) {
    Tape tape;
    run_forward(spec, params, nullptr, x, ForwardMode::train, &tape, nullptr, true);
    if (logit_grad.rows() != x.rows() || logit_grad.cols() != spec.num_classes()) {
        throw ConfigError("logit gradient shape does not match network output");
    }
    return run_backward(spec, params, tape, logit_grad, feature_grad);
}

BNStats recompute_bn_stats(const NetworkSpec& spec, const ParamVector& params, const Matrix& x,
                           std::size_t batch_size) {
    if (x.rows() == 0) throw InputError("recompute_bn_stats: empty dataset");
    if (batch_size == 0) throw ConfigError("recompute_bn_stats: batch_size must be positive");
    BNStats stats;
    if (spec.batch_norm_count() == 0) return stats;

    const auto& bn_layers = spec.batch_norm_layers();
    std::vector<std::vector<double>> mean(bn_layers.size());
    std::vector<std::vector<double>> m2(bn_layers.size());
    for (std::size_t j = 0; j < bn_layers.size(); ++j) {
        const auto width = std::get<BatchNormLayer>(spec.layers()[bn_layers[j]]).width;
        mean[j].assign(width, 0.0);
        m2[j].assign(width, 0.0);
    }
    double count = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < x.rows(); start += batch_size) {
        const std::size_t stop = std::min(x.rows(), start + batch_size);
        rows.resize(stop - start);
        for (std::size_t i = start; i < stop; ++i) rows[i - start] = i;
        Matrix batch = x.gather_rows(rows);
        Tape tape;
        run_forward(spec, params, nullptr, batch, ForwardMode::train, &tape, nullptr, true);
        const double nb = static_cast<double>(stop - start);
        const double total = count + nb;
        for (std::size_t j = 0; j < bn_layers.size(); ++j) {
            const auto& cache = tape.bn[bn_layers[j]];
            for (std::size_t c = 0; c < mean[j].size(); ++c) {
                // Chan et al. pairwise merge of (count, mean, M2).
                const double delta = cache.mean[c] - mean[j][c];
                mean[j][c] += delta * nb / total;
                m2[j][c] += cache.var[c] * nb + delta * delta * count * nb / total;
            }
        }
        count = total;
    }
    stats.layers.resize(bn_layers.size());
    for (std::size_t j = 0; j < bn_layers.size(); ++j) {
        auto& layer = stats.layers[j];
        layer.running_mean = mean[j];
        layer.running_var.resize(m2[j].size());
        for (std::size_t c = 0; c < m2[j].size(); ++c) layer.running_var[c] = std::max(0.0, m2[j][c] / count);
        layer.sample_count = x.rows();
    }
    return stats;
}

} // namespace lsub
