#pragma once

#include "lsub/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lsub {

/// Labelled examples with features in [0, 1].
struct Dataset {
    Matrix inputs;
    std::vector<int> labels;
    /// True where inject_label_noise replaced the label.
    std::vector<unsigned char> noise_mask;
    std::string name;
    std::size_t num_classes = 0;
    std::string split = "train";
    /// Image geometry for IDX output; rows * cols == input dimension.
    std::size_t image_rows = 1;
    std::size_t image_cols = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }

    /// Throws InputError unless shapes and label range are consistent.
    void validate() const;
    /// Rows `indices` as a new dataset with the same metadata.
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// k Gaussian clusters. Centers depend only on `seed`; the points depend on
/// `seed` and `split`, so "train" and "test" are disjoint draws around the
/// same centers. Class of example i is i mod k (balanced).
Dataset synth_blobs(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t k, double spread,
                    const std::string& split = "train");

/// Cluster centers used by synth_blobs for `seed`; rows are classes.
Matrix blob_centers(std::uint64_t seed, std::size_t d, std::size_t k);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image file (ubyte, N x rows x cols) and label file (ubyte, N).
/// Pixels are scaled by 1/255 and flattened row-major.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes inputs quantized to round(255 x) and labels as IDX files.
void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

/// Replaces floor(c N) labels, chosen without replacement, with uniform draws over all k classes.
Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed);

/// Adds N(0, severity²) noise to every feature, then clamps to [0, 1].
Dataset corrupt_gaussian(const Dataset& data, double severity, std::uint64_t seed);

/// SHA-256 of the inputs, labels and class count, as hex.
std::string fingerprint(const Dataset& data);

} // namespace lsub
