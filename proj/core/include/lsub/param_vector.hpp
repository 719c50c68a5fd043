#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsub {

enum class SegmentKind { dense_weight, dense_bias, bn_gain, bn_shift };

std::string_view to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(std::string_view name);

struct Segment {
    int layer_index = 0;
    SegmentKind kind = SegmentKind::dense_weight;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool is_batch_norm() const {
        return kind == SegmentKind::bn_gain || kind == SegmentKind::bn_shift;
    }
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// A contiguous range of coordinates that share one sampled coordinate in
/// layerwise mode: a dense layer with its bias, or one batch-norm layer.
struct LayerGroup {
    int layer_index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Layout of a flat parameter vector. Segments are sorted, contiguous and
/// cover [0, size()). The batch-norm mask and layer groups are derived.
class SegmentTable {
public:
    SegmentTable() = default;
    explicit SegmentTable(std::vector<Segment> segments);

    const std::vector<Segment>& segments() const { return segments_; }
    const std::vector<LayerGroup>& groups() const { return groups_; }
    std::size_t size() const { return size_; }

    /// 1 on batch-norm gain/shift coordinates, 0 elsewhere.
    const std::vector<unsigned char>& bn_mask() const { return bn_mask_; }
    std::size_t unmasked_count() const { return unmasked_count_; }

    /// Index into groups() owning the given layer, or throws ConfigError.
    std::size_t group_of_layer(int layer_index) const;

    friend bool operator==(const SegmentTable& a, const SegmentTable& b) {
        return a.segments_ == b.segments_;
    }

private:
    std::vector<Segment> segments_;
    std::vector<LayerGroup> groups_;
    std::vector<unsigned char> bn_mask_;
    std::size_t size_ = 0;
    std::size_t unmasked_count_ = 0;
};

using SegmentTablePtr = std::shared_ptr<const SegmentTable>;

/// Flat weight vector tagged with its segment table. Every arithmetic helper
/// keeps the table of its inputs and rejects mismatched tables.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(SegmentTablePtr table, double fill = 0.0);
    ParamVector(SegmentTablePtr table, std::vector<double> values);

    std::size_t size() const { return values_.size(); }
    const SegmentTablePtr& table() const { return table_; }
    bool same_layout(const ParamVector& other) const;

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> segment(const Segment& s) { return values().subspan(s.offset, s.length); }
    std::span<const double> segment(const Segment& s) const {
        return values().subspan(s.offset, s.length);
    }

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double scale);
    /// this += scale * other
    ParamVector& axpy(double scale, const ParamVector& other);

    /// Bitwise equality of values and equal segment tables.
    friend bool operator==(const ParamVector& a, const ParamVector& b);

private:
    SegmentTablePtr table_;
    std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);

/// sum_i coeffs[i] * vectors[i], accumulated left to right starting from
/// coeffs[0] * vectors[0].
ParamVector linear_combination(std::span<const double> coeffs, std::span<const ParamVector> vectors);

void require_same_layout(const ParamVector& a, const ParamVector& b, std::string_view what);

double dot(const ParamVector& a, const ParamVector& b);
/// Inner product restricted to coordinates outside the batch-norm mask.
double masked_dot(const ParamVector& a, const ParamVector& b);
double masked_squared_norm(const ParamVector& a);
/// Euclidean distance over coordinates outside the batch-norm mask.
double masked_distance(const ParamVector& a, const ParamVector& b);

} // namespace lsub
