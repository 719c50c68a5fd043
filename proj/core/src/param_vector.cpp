#include "lsub/param_vector.hpp"

#include "lsub/error.hpp"

#include <cmath>
#include <string>

namespace lsub {

std::string_view to_string(SegmentKind kind) {
    switch (kind) {
    case SegmentKind::dense_weight: return "dense_weight";
    case SegmentKind::dense_bias: return "dense_bias";
    case SegmentKind::bn_gain: return "bn_gain";
    case SegmentKind::bn_shift: return "bn_shift";
    }
    return "?";
}

SegmentKind segment_kind_from_string(std::string_view name) {
    if (name == "dense_weight") return SegmentKind::dense_weight;
    if (name == "dense_bias") return SegmentKind::dense_bias;
    if (name == "bn_gain") return SegmentKind::bn_gain;
    if (name == "bn_shift") return SegmentKind::bn_shift;
    throw FormatError("unknown segment kind '" + std::string(name) + "'");
}

SegmentTable::SegmentTable(std::vector<Segment> segments) : segments_(std::move(segments)) {
    std::size_t expected = 0;
    for (const auto& s : segments_) {
        if (s.offset != expected) {
            throw ConfigError("segment table not contiguous at offset " + std::to_string(s.offset));
        }
        expected += s.length;
    }
    size_ = expected;
    bn_mask_.assign(size_, 0);
    for (const auto& s : segments_) {
        if (s.is_batch_norm()) {
            std::fill_n(bn_mask_.begin() + static_cast<std::ptrdiff_t>(s.offset), s.length, 1);
        } else {
            unmasked_count_ += s.length;
        }
        if (groups_.empty() || groups_.back().layer_index != s.layer_index) {
            groups_.push_back({s.layer_index, s.offset, s.offset + s.length});
        } else {
            groups_.back().end = s.offset + s.length;
        }
    }
}

std::size_t SegmentTable::group_of_layer(int layer_index) const {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].layer_index == layer_index) return g;
    }
    throw ConfigError("no parameterized layer with index " + std::to_string(layer_index));
}

ParamVector::ParamVector(SegmentTablePtr table, double fill) : table_(std::move(table)) {
    if (!table_) throw ConfigError("ParamVector requires a segment table");
    values_.assign(table_->size(), fill);
}

ParamVector::ParamVector(SegmentTablePtr table, std::vector<double> values)
    : table_(std::move(table)), values_(std::move(values)) {
    if (!table_) throw ConfigError("ParamVector requires a segment table");
    if (values_.size() != table_->size()) {
        throw ConfigError("ParamVector has " + std::to_string(values_.size()) +
                          " values but its segment table covers " + std::to_string(table_->size()));
    }
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (table_ == other.table_) return true;
    if (!table_ || !other.table_) return false;
    return *table_ == *other.table_;
}

void require_same_layout(const ParamVector& a, const ParamVector& b, std::string_view what) {
    if (!a.same_layout(b)) {
        throw ConfigError("segment table mismatch in " + std::string(what));
    }
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
    require_same_layout(*this, other, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
    require_same_layout(*this, other, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double scale) {
    for (double& v : values_) v *= scale;
    return *this;
}

ParamVector& ParamVector::axpy(double scale, const ParamVector& other) {
    require_same_layout(*this, other, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
    return *this;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
    if (!a.same_layout(b)) return false;
    // Bitwise, so that -0.0 and 0.0 differ and NaN payloads compare.
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
        if (std::signbit(a.values_[i]) != std::signbit(b.values_[i])) return false;
        if (!(a.values_[i] == b.values_[i]) && !(std::isnan(a.values_[i]) && std::isnan(b.values_[i]))) {
            return false;
        }
    }
    return true;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

ParamVector linear_combination(std::span<const double> coeffs, std::span<const ParamVector> vectors) {
    if (coeffs.size() != vectors.size() || vectors.empty()) {
        throw ConfigError("linear_combination needs one coefficient per vector");
    }
    ParamVector out = coeffs[0] * vectors[0];
    for (std::size_t i = 1; i < vectors.size(); ++i) out.axpy(coeffs[i], vectors[i]);
    return out;
}

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double masked_dot(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "masked_dot");
    const auto& mask = a.table()->bn_mask();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!mask[i]) s += a[i] * b[i];
    }
    return s;
}

double masked_squared_norm(const ParamVector& a) { return masked_dot(a, a); }

double masked_distance(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "masked_distance");
    const auto& mask = a.table()->bn_mask();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!mask[i]) {
            const double d = a[i] - b[i];
            s += d * d;
        }
    }
    return std::sqrt(s);
}

} // namespace lsub
