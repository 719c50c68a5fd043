#include "lsub/data.hpp"

#include "lsub/error.hpp"
#include "lsub/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace lsub {

void Dataset::validate() const {
    if (inputs.rows() != labels.size()) throw InputError(name + ": inputs and labels differ in length");
    if (noise_mask.size() != labels.size()) throw InputError(name + ": noise mask has wrong length");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw InputError(name + ": label " + std::to_string(y) + " out of range");
        }
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.inputs = inputs.gather_rows(indices);
    out.labels.reserve(indices.size());
    out.noise_mask.reserve(indices.size());
    for (auto i : indices) {
        out.labels.push_back(labels.at(i));
        out.noise_mask.push_back(noise_mask.at(i));
    }
    out.name = name;
    out.num_classes = num_classes;
    out.split = split;
    out.image_rows = image_rows;
    out.image_cols = image_cols;
    return out;
}

Matrix blob_centers(std::uint64_t seed, std::size_t d, std::size_t k) {
    Rng rng = make_rng(seed, "blob_centers");
    std::uniform_real_distribution<double> uniform(0.2, 0.8);
    Matrix centers(k, d);
    for (double& v : centers.data()) v = uniform(rng);
    return centers;
}

Dataset synth_blobs(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t k, double spread,
                    const std::string& split) {
    if (k < 2) throw InputError("synth_blobs: need at least 2 classes");
    if (n < k) throw InputError("synth_blobs: need n >= k");
    if (d == 0) throw InputError("synth_blobs: zero dimension");
    if (!(spread >= 0.0)) throw InputError("synth_blobs: spread must be non-negative");

    const Matrix centers = blob_centers(seed, d, k);
    Rng rng = make_rng(seed, "blob_points:" + split);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset out;
    out.inputs = Matrix(n, d);
    out.labels.resize(n);
    out.noise_mask.assign(n, 0);
    out.name = "blobs";
    out.num_classes = k;
    out.split = split;
    out.image_rows = 1;
    out.image_cols = d;
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = i % k;
        out.labels[i] = static_cast<int>(label);
        for (std::size_t c = 0; c < d; ++c) {
            const double v = centers(label, c) + spread * normal(rng);
            out.inputs(i, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(path.string() + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

std::string hex_offset(std::size_t offset) {
    std::ostringstream s;
    s << offset << " (0x" << std::hex << offset << ")";
    return s.str();
}

} // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_file(images);
    const auto lab = read_file(labels);

    const auto img_magic = read_be32(img, 0, images);
    if (img_magic != kIdxImageMagic) {
        std::ostringstream msg;
        msg << images.string() << ": bad image magic 0x" << std::hex << img_magic << " at offset 0";
        throw FormatError(msg.str());
    }
    const auto lab_magic = read_be32(lab, 0, labels);
    if (lab_magic != kIdxLabelMagic) {
        std::ostringstream msg;
        msg << labels.string() << ": bad label magic 0x" << std::hex << lab_magic << " at offset 0";
        throw FormatError(msg.str());
    }
    const std::size_t n = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t n_labels = read_be32(lab, 4, labels);
    if (n != n_labels) {
        throw FormatError(labels.string() + ": label count " + std::to_string(n_labels) + " at offset 4 != image count " +
                          std::to_string(n));
    }
    const std::size_t d = rows * cols;
    const std::size_t img_needed = 16 + n * d;
    if (img.size() < img_needed) {
        throw FormatError(images.string() + ": truncated pixel data at offset " + hex_offset(img.size()) + ", expected " +
                          std::to_string(img_needed) + " bytes");
    }
    if (lab.size() < 8 + n) {
        throw FormatError(labels.string() + ": truncated label data at offset " + hex_offset(lab.size()));
    }
    if (img.size() != img_needed) throw FormatError(images.string() + ": trailing bytes at offset " + hex_offset(img_needed));
    if (lab.size() != 8 + n) throw FormatError(labels.string() + ": trailing bytes at offset " + hex_offset(8 + n));

    Dataset out;
    out.inputs = Matrix(n, d);
    for (std::size_t i = 0; i < n * d; ++i) out.inputs.data()[i] = static_cast<double>(img[16 + i]) / 255.0;
    out.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out.labels[i] = lab[8 + i];
        max_label = std::max(max_label, out.labels[i]);
    }
    out.noise_mask.assign(n, 0);
    out.name = images.filename().string();
    out.num_classes = static_cast<std::size_t>(max_label) + 1;
    out.image_rows = rows;
    out.image_cols = cols;
    return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
    data.validate();
    std::size_t rows = data.image_rows;
    std::size_t cols = data.image_cols;
    if (rows * cols != data.dim()) {
        rows = 1;
        cols = data.dim();
    }
    for (const auto& p : {images, labels}) {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    }
    std::ofstream img(images, std::ios::binary | std::ios::trunc);
    if (!img) throw IoError("cannot open " + images.string() + " for writing");
    write_be32(img, kIdxImageMagic);
    write_be32(img, static_cast<std::uint32_t>(data.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    for (double v : data.inputs.data()) {
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        img.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    if (!img) throw IoError("write failed for " + images.string());

    std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
    if (!lab) throw IoError("cannot open " + labels.string() + " for writing");
    write_be32(lab, kIdxLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) {
        if (y > 255) throw InputError("IDX labels must fit in one byte");
        lab.put(static_cast<char>(static_cast<unsigned char>(y)));
    }
    if (!lab) throw IoError("write failed for " + labels.string());
}

Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("label noise fraction must lie in [0, 1]");
    data.validate();
    Dataset out = data;
    const std::size_t n = data.size();
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (count == 0) return out;
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> label(0, static_cast<int>(data.num_classes) - 1);
    for (std::size_t i = 0; i < count; ++i) {
        out.labels[order[i]] = label(rng);
        out.noise_mask[order[i]] = 1;
    }
    return out;
}

Dataset corrupt_gaussian(const Dataset& data, double severity, std::uint64_t seed) {
    if (!(severity >= 0.0)) throw InputError("corruption severity must be non-negative");
    Dataset out = data;
    if (severity == 0.0) return out;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, severity);
    for (double& v : out.inputs.data()) v = std::clamp(v + normal(rng), 0.0, 1.0);
    return out;
}

std::string fingerprint(const Dataset& data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    const std::uint64_t header[3] = {data.inputs.rows(), data.inputs.cols(), data.num_classes};
    EVP_DigestUpdate(ctx.get(), header, sizeof(header));
    EVP_DigestUpdate(ctx.get(), data.inputs.data().data(), data.inputs.data().size() * sizeof(double));
    EVP_DigestUpdate(ctx.get(), data.labels.data(), data.labels.size() * sizeof(int));
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

} // namespace lsub
