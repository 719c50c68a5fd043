#include "lsub_cli/config.hpp"

#include <lsub/error.hpp>
#include <lsub/rng.hpp>

#include <fstream>
#include <sstream>

namespace lsub::cli {

Json default_config() {
    return Json::parse(R"({
  "train": {
    "epochs": 160,
    "batch_size": 128,
    "lr_max": 0.1,
    "momentum": 0.9,
    "weight_decay": 0.0001,
    "warmup_epochs": 5,
    "beta": 1.0,
    "lambda": 0.0,
    "samples": 1,
    "layerwise": false,
    "seed": 0,
    "loss": "cross_entropy",
    "label_smoothing": 0.0,
    "point_init": false
  },
  "model": {
    "hidden": [32],
    "batch_norm": true,
    "network": ""
  },
  "subspace": {
    "kind": "line"
  },
  "data": {
    "source": "blobs",
    "seed": null,
    "n_train": 2048,
    "n_test": 1024,
    "dim": 16,
    "classes": 3,
    "spread": 0.15,
    "label_noise": 0.0,
    "train_images": "",
    "train_labels": "",
    "test_images": "",
    "test_labels": ""
  },
  "eval": {
    "grid": "0:1:0.05",
    "bn_batch_size": 128,
    "ece_bins": 15,
    "ensemble_members": 6,
    "corruption_severity": 0.0,
    "plane_resolution": 21,
    "plane_margin": 0.2
  },
  "instability": {
    "k": 0,
    "total_epochs": null,
    "forks": 2,
    "mode": "shared_prefix",
    "grid_points": 21,
    "mixture_samples": 8
  },
  "integral": {
    "epsilon": 0.1
  }
})");
}

Json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
    if (j.contains("artifact_version") && j.contains("config")) return j.at("config");
    return j;
}

void merge_config(Json& base, const Json& patch, const std::string& prefix) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        Json& target = base[it.key()];
        if (target.is_object()) {
            if (!it.value().is_object()) throw ConfigError("config key '" + key + "' must be a section");
            merge_config(target, it.value(), key);
        } else {
            target = it.value();
        }
    }
}

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    Json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
        parts.push_back(rest.substr(0, pos));
    }
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
    merge_config(config, patch);
}

namespace {

class Reader {
public:
    explicit Reader(const Json& root) : root_(root) {}

    const Json& at(const std::string& key) const {
        const Json* node = &root_;
        std::string rest = key;
        while (true) {
            const auto pos = rest.find('.');
            const std::string part = rest.substr(0, pos);
            if (!node->contains(part)) throw ConfigError("missing config key '" + key + "'");
            node = &node->at(part);
            if (pos == std::string::npos) return *node;
            rest = rest.substr(pos + 1);
        }
    }

    bool is_null(const std::string& key) const { return at(key).is_null(); }

    std::uint64_t u64(const std::string& key) const {
        const Json& v = at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            throw ConfigError(key + ": expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

    double real(const std::string& key) const {
        const Json& v = at(key);
        if (!v.is_number()) throw ConfigError(key + ": expected a number");
        return v.get<double>();
    }

    bool flag(const std::string& key) const {
        const Json& v = at(key);
        if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key) const {
        const Json& v = at(key);
        if (!v.is_string()) throw ConfigError(key + ": expected a string");
        return v.get<std::string>();
    }

private:
    const Json& root_;
};

} // namespace

Settings::Settings(const Json& config) {
    Reader r(config);
    train.epochs = r.size("train.epochs");
    train.batch_size = r.size("train.batch_size");
    train.lr_max = r.real("train.lr_max");
    train.momentum = r.real("train.momentum");
    train.weight_decay = r.real("train.weight_decay");
    train.warmup_epochs = r.size("train.warmup_epochs");
    train.beta = r.real("train.beta");
    train.lambda = r.real("train.lambda");
    train.samples = r.size("train.samples");
    train.layerwise = r.flag("train.layerwise");
    train.seed = r.u64("train.seed");
    train.point_init = r.flag("train.point_init");
    try {
        train.loss = LossKind::parse(r.text("train.loss"), r.real("train.label_smoothing"));
    } catch (const Error& e) {
        throw ConfigError(std::string("train.loss: ") + e.what());
    }
    train.validate();
    seed = train.seed;

    const Json& hidden_json = r.at("model.hidden");
    if (!hidden_json.is_array()) throw ConfigError("model.hidden: expected an array of widths");
    for (const auto& w : hidden_json) {
        if (!w.is_number_unsigned() || w.get<std::size_t>() == 0) {
            throw ConfigError("model.hidden: widths must be positive integers");
        }
        hidden.push_back(w.get<std::size_t>());
    }
    batch_norm = r.flag("model.batch_norm");
    network = r.text("model.network");

    try {
        shape = SubspaceShape::parse(r.text("subspace.kind"));
    } catch (const Error& e) {
        throw ConfigError(std::string("subspace.kind: ") + e.what());
    }

    data.source = r.text("data.source");
    if (data.source != "blobs" && data.source != "idx") throw ConfigError("data.source: expected 'blobs' or 'idx'");
    data.seed = r.is_null("data.seed") ? derive_seed(seed, streams::data) : r.u64("data.seed");
    data.n_train = r.size("data.n_train");
    data.n_test = r.size("data.n_test");
    data.dim = r.size("data.dim");
    data.classes = r.size("data.classes");
    data.spread = r.real("data.spread");
    data.label_noise = r.real("data.label_noise");
    if (!(data.label_noise >= 0.0 && data.label_noise <= 1.0)) throw ConfigError("data.label_noise: must lie in [0, 1]");
    data.train_images = r.text("data.train_images");
    data.train_labels = r.text("data.train_labels");
    data.test_images = r.text("data.test_images");
    data.test_labels = r.text("data.test_labels");

    grid = r.text("eval.grid");
    parse_grid(grid);
    eval.bn_batch_size = r.size("eval.bn_batch_size");
    if (eval.bn_batch_size == 0) throw ConfigError("eval.bn_batch_size: must be positive");
    eval.ece_bins = r.size("eval.ece_bins");
    if (eval.ece_bins == 0) throw ConfigError("eval.ece_bins: must be positive");
    eval.loss = train.loss;
    ensemble_members = r.size("eval.ensemble_members");
    corruption_severity = r.real("eval.corruption_severity");
    if (corruption_severity < 0.0) throw ConfigError("eval.corruption_severity: must be non-negative");
    plane_resolution = r.size("eval.plane_resolution");
    if (plane_resolution < 2) throw ConfigError("eval.plane_resolution: must be at least 2");
    plane_margin = r.real("eval.plane_margin");
    if (plane_margin < 0.0) throw ConfigError("eval.plane_margin: must be non-negative");

    instability.k = r.size("instability.k");
    instability.total_epochs = r.is_null("instability.total_epochs") ? train.epochs : r.size("instability.total_epochs");
    if (instability.k > instability.total_epochs) throw ConfigError("instability.k: must not exceed total_epochs");
    const std::size_t forks = r.size("instability.forks");
    if (forks < 2) throw ConfigError("instability.forks: need at least 2");
    const std::uint64_t fork_root = derive_seed(seed, "fork");
    for (std::size_t i = 0; i < forks; ++i) instability.fork_seeds.push_back(derive_seed(fork_root, i));
    const std::string mode = r.text("instability.mode");
    if (mode == "shared_prefix") {
        instability.mode = ForkMode::shared_prefix;
    } else if (mode == "different_init") {
        instability.mode = ForkMode::different_init;
        if (instability.k != 0) throw ConfigError("instability.k: must be 0 in different_init mode");
    } else {
        throw ConfigError("instability.mode: expected 'shared_prefix' or 'different_init'");
    }
    const std::size_t points = r.size("instability.grid_points");
    if (points < 2) throw ConfigError("instability.grid_points: need at least 2");
    instability.alpha_grid = linspace(0.0, 1.0, points);
    instability.mixture_samples = r.size("instability.mixture_samples");

    epsilon = r.real("integral.epsilon");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("integral.epsilon: must lie in (0, 1)");
}

NetworkSpec Settings::network_spec(std::size_t input_dim, std::size_t num_classes) const {
    if (!network.empty()) return NetworkSpec::parse(network, input_dim, num_classes);
    return NetworkSpec::mlp(input_dim, hidden, num_classes, batch_norm);
}

Datasets Settings::load_data() const {
    Datasets out;
    if (data.source == "blobs") {
        out.train = synth_blobs(data.seed, data.n_train, data.dim, data.classes, data.spread, "train");
        out.test = synth_blobs(data.seed, data.n_test, data.dim, data.classes, data.spread, "test");
    } else {
        if (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() ||
            data.test_labels.empty()) {
            throw ConfigError("data: idx source needs train_images, train_labels, test_images and test_labels");
        }
        out.train = load_idx(data.train_images, data.train_labels);
        out.test = load_idx(data.test_images, data.test_labels);
        out.test.split = "test";
        if (out.train.dim() != out.test.dim()) throw InputError("data: train and test input sizes differ");
        const auto k = std::max(out.train.num_classes, out.test.num_classes);
        out.train.num_classes = out.test.num_classes = k;
    }
    if (data.label_noise > 0.0) {
        out.train = inject_label_noise(out.train, data.label_noise, derive_seed(seed, streams::label_noise));
    }
    return out;
}

} // namespace lsub::cli
