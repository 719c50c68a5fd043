#include "lsub/loss.hpp"

#include "lsub/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lsub {

std::string LossKind::name() const {
    return type == Type::mse ? "mse" : "cross_entropy";
}

LossKind LossKind::parse(const std::string& name, double smoothing) {
    if (name == "cross_entropy") {
        if (!(smoothing >= 0.0 && smoothing < 1.0)) {
            throw ConfigError("label smoothing must lie in [0, 1), got " + std::to_string(smoothing));
        }
        return cross_entropy(smoothing);
    }
    if (name == "mse") return mse();
    throw ConfigError("unknown loss kind '" + name + "'");
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        auto out = p.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            out[c] = std::exp(z[c] - zmax);
            sum += out[c];
        }
        for (double& v : out) v /= sum;
    }
    return p;
}

namespace {

void check_shapes(const Matrix& logits, std::span<const int> labels) {
    if (logits.rows() != labels.size()) {
        throw ConfigError("loss: " + std::to_string(logits.rows()) + " logit rows but " +
                          std::to_string(labels.size()) + " labels");
    }
    if (logits.rows() == 0) throw InputError("loss: empty batch");
    const int k = static_cast<int>(logits.cols());
    for (int y : labels) {
        if (y < 0 || y >= k) throw InputError("loss: label " + std::to_string(y) + " out of range");
    }
}

} // namespace

LossValue loss_with_grad(const Matrix& logits, std::span<const int> labels, const LossKind& kind) {
    check_shapes(logits, labels);
    const std::size_t batch = logits.rows();
    const std::size_t k = logits.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);
    LossValue out{0.0, Matrix(batch, k)};

    if (kind.type == LossKind::Type::mse) {
        for (std::size_t r = 0; r < batch; ++r) {
            double row_loss = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
                const double d = logits(r, c) - target;
                row_loss += d * d;
                out.grad(r, c) = 2.0 * d * inv_b;
            }
            out.value += row_loss;
        }
        out.value *= inv_b;
        return out;
    }

    const double s = kind.smoothing;
    const double off = s / static_cast<double>(k);
    const double on = 1.0 - s + off;
    for (std::size_t r = 0; r < batch; ++r) {
        auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double lse = zmax + std::log(sum);
        double row_loss = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double target = static_cast<int>(c) == labels[r] ? on : off;
            const double logp = z[c] - lse;
            if (target != 0.0) row_loss -= target * logp;
            out.grad(r, c) = (std::exp(logp) - target) * inv_b;
        }
        out.value += row_loss;
    }
    out.value *= inv_b;
    return out;
}

double loss(const Matrix& logits, std::span<const int> labels, const LossKind& kind) {
    return loss_with_grad(logits, labels, kind).value;
}

} // namespace lsub
