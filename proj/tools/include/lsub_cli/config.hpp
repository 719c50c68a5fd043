#pragma once

#include <lsub/data.hpp>
#include <lsub/evaluation.hpp>
#include <lsub/experiments.hpp>
#include <lsub/network.hpp>
#include <lsub/subspace.hpp>
#include <lsub/trainer.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lsub::cli {

using Json = nlohmann::ordered_json;

/// Every accepted key with its default value. Files and overrides may only
/// set keys that appear here.
Json default_config();

/// Reads a JSON config, or the "config" section of a run manifest.
Json read_config_file(const std::filesystem::path& path);

/// Recursively copies `patch` onto `base`; unknown keys throw ConfigError
/// naming the full dotted key.
void merge_config(Json& base, const Json& patch, const std::string& prefix = "");

/// Applies "a.b=value". The value is parsed as JSON when possible, otherwise
/// taken as a string.
void apply_override(Json& config, const std::string& assignment);

struct DataSettings {
    std::string source;
    std::uint64_t seed = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t dim = 0;
    std::size_t classes = 0;
    double spread = 0.0;
    double label_noise = 0.0;
    std::string train_images, train_labels, test_images, test_labels;
};

struct Datasets {
    Dataset train;
    Dataset test;
};

/// Typed view of a resolved config. Construction validates every field.
struct Settings {
    std::uint64_t seed = 0;
    TrainConfig train;
    DataSettings data;
    std::vector<std::size_t> hidden;
    bool batch_norm = true;
    std::string network;
    SubspaceShape shape = SubspaceShape::line();
    EvalOptions eval;
    std::string grid;
    std::size_t ensemble_members = 0;
    double corruption_severity = 0.0;
    std::size_t plane_resolution = 0;
    double plane_margin = 0.0;
    InstabilityOptions instability;
    double epsilon = 0.1;

    explicit Settings(const Json& config);

    NetworkSpec network_spec(std::size_t input_dim, std::size_t num_classes) const;
    Datasets load_data() const;
};

} // namespace lsub::cli
