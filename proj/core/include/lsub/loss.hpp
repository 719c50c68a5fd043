#pragma once

#include "lsub/matrix.hpp"

#include <span>
#include <string>

namespace lsub {

struct LossKind {
    enum class Type { cross_entropy, mse };
    Type type = Type::cross_entropy;
    /// Label smoothing for cross-entropy, in [0, 1). Ignored for mse.
    double smoothing = 0.0;

    static LossKind cross_entropy(double smoothing = 0.0) { return {Type::cross_entropy, smoothing}; }
    static LossKind mse() { return {Type::mse, 0.0}; }

    /// "cross_entropy" or "mse".
    std::string name() const;
    static LossKind parse(const std::string& name, double smoothing);
};

struct LossValue {
    double value = 0.0;
    /// d(value)/d(logits); same shape as logits.
    Matrix grad;
};

/// Mean loss over the batch. Cross-entropy targets are (1-s)·onehot + s/k.
/// MSE is the squared error summed over classes against one-hot targets,
/// averaged over the batch.
LossValue loss_with_grad(const Matrix& logits, std::span<const int> labels, const LossKind& kind);
double loss(const Matrix& logits, std::span<const int> labels, const LossKind& kind);

/// Row-wise numerically stable softmax.
Matrix softmax(const Matrix& logits);

} // namespace lsub
