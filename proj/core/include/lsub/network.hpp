#pragma once

#include "lsub/loss.hpp"
#include "lsub/matrix.hpp"
#include "lsub/param_vector.hpp"
#include "lsub/rng.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lsub {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};
struct BatchNormLayer {
    std::size_t width = 0;
    friend bool operator==(const BatchNormLayer&, const BatchNormLayer&) = default;
};
struct ReluLayer {
    friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};
/// Marks the network output. Logits are the input of this layer; softmax
/// is applied by the loss and by evaluation, never inside forward().
struct SoftmaxHead {
    friend bool operator==(const SoftmaxHead&, const SoftmaxHead&) = default;
};

using LayerDesc = std::variant<DenseLayer, BatchNormLayer, ReluLayer, SoftmaxHead>;

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Architecture of a feed-forward network. Validated on construction.
class NetworkSpec {
public:
    NetworkSpec(std::vector<LayerDesc> layers, std::size_t input_dim, std::size_t num_classes);

    /// dense -> [batch_norm] -> relu per hidden width, then dense -> softmax_head.
    static NetworkSpec mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                           std::size_t num_classes, bool batch_norm);

    /// Parses the text form produced by to_string(), e.g.
    /// "dense(4,16) batch_norm(16) relu dense(16,3) softmax_head".
    static NetworkSpec parse(const std::string& text, std::size_t input_dim, std::size_t num_classes);
    std::string to_string() const;

    const std::vector<LayerDesc>& layers() const { return layers_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t param_count() const { return table_->size(); }
    const SegmentTablePtr& table() const { return table_; }

    /// Number of batch-norm layers.
    std::size_t batch_norm_count() const { return bn_layers_.size(); }
    /// Layer indices of batch-norm layers, in order.
    const std::vector<std::size_t>& batch_norm_layers() const { return bn_layers_; }
    /// Layer index of the final dense layer; its input is the feature vector.
    std::size_t final_dense_index() const { return final_dense_; }
    std::size_t feature_width() const;

    friend bool operator==(const NetworkSpec& a, const NetworkSpec& b) {
        return a.layers_ == b.layers_ && a.input_dim_ == b.input_dim_ &&
               a.num_classes_ == b.num_classes_;
    }

private:
    std::vector<LayerDesc> layers_;
    std::size_t input_dim_;
    std::size_t num_classes_;
    SegmentTablePtr table_;
    std::vector<std::size_t> bn_layers_;
    std::size_t final_dense_ = 0;
};

/// Running statistics per batch-norm layer, in the order of NetworkSpec::batch_norm_layers().
struct BNStats {
    struct Layer {
        std::vector<double> running_mean;
        std::vector<double> running_var;
        std::size_t sample_count = 0;
    };
    std::vector<Layer> layers;

    bool empty() const { return layers.empty(); }
};

enum class ForwardMode { train, eval };

struct ForwardOutput {
    Matrix logits;
    /// Input to the final dense layer (post-activation penultimate features).
    Matrix features;
};

/// Zero-mean normal dense weights with std sqrt(2/fan_in), zero biases,
/// unit bn gains and zero bn shifts.
ParamVector init_params(const NetworkSpec& spec, Rng& rng);

ForwardOutput forward(const NetworkSpec& spec, const ParamVector& params, const BNStats& stats,
                      const Matrix& x, ForwardMode mode);

struct BackwardResult {
    double loss = 0.0;
    ParamVector grad;
    Matrix logits;
    Matrix features;
};

/// Extra inputs for backward(): scales the loss term and injects an upstream
/// gradient at the features. Used when the batch loss is one of several terms.
struct BackwardOptions {
    double loss_scale = 1.0;
    const Matrix* feature_grad = nullptr;
};

/// Train-mode forward plus exact reverse-mode gradient of the mean batch loss.
/// The reported loss is the unscaled batch loss.
BackwardResult backward(const NetworkSpec& spec, const ParamVector& params, const Matrix& x,
                        std::span<const int> labels, const LossKind& loss,
                        const BackwardOptions& options = {});

/// Reverse-mode pass from an arbitrary upstream gradient on the logits
/// (and optionally on the features). Returns d/dparams of <logit_grad, logits>.
ParamVector backward_from_logits(const NetworkSpec& spec, const ParamVector& params,
                                 const Matrix& x, const Matrix& logit_grad,
                                 const Matrix* feature_grad = nullptr);

/// One pass over `x` in row order and in chunks of batch_size, train-mode
/// propagation, pooled mean and population variance of every batch-norm input.
BNStats recompute_bn_stats(const NetworkSpec& spec, const ParamVector& params, const Matrix& x,
                           std::size_t batch_size);

} // namespace lsub
