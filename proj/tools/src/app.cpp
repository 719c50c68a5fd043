#include "lsub_cli/app.hpp"
#include "lsub_cli/config.hpp"

#include <lsub/checkpoint.hpp>
#include <lsub/error.hpp>
#include <lsub/rng.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace lsub::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";
constexpr const char* kSubspaceFile = "subspace.ckpt";

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string run_id;
    std::vector<std::string> sets;
    bool overwrite = false;
};

struct CommandOptions {
    std::string checkpoint;
    std::string grid;
    std::optional<double> epsilon;
};

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

/// Output directory of one command invocation plus its write-once manifest.
class RunDir {
public:
    RunDir(const std::string& command, const CommonOptions& opts, const Json& config, std::uint64_t seed)
        : created_(timestamp()) {
        run_id_ = opts.run_id.empty() ? command + "-" + created_ + "-s" + std::to_string(seed) : opts.run_id;
        if (!opts.out_dir.empty()) {
            dir_ = opts.out_dir;
        } else {
            const char* root = std::getenv("LSUB_OUT_ROOT");
            dir_ = fs::path(root && *root ? root : "runs") / run_id_;
        }
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
        if (fs::exists(manifest_path()) && !opts.overwrite) {
            throw StateError("run manifest " + manifest_path().string() + " already exists (pass --overwrite)");
        }
        manifest_["run_id"] = run_id_;
        manifest_["command"] = command;
        manifest_["created"] = created_;
        manifest_["artifact_version"] = kArtifactVersion;
        manifest_["seed"] = seed;
        manifest_["overrides"] = opts.sets;
        manifest_["config"] = config;
        manifest_["dataset_fingerprint"] = Json::object();
        manifest_["inputs"] = Json::array();
        manifest_["checkpoints"] = Json::array();
        manifest_["metrics"] = Json::array();
        manifest_["logs"] = Json::array();
    }

    const fs::path& dir() const { return dir_; }
    fs::path manifest_path() const { return dir_ / "manifest.json"; }

    void fingerprint(const std::string& split, const Dataset& data) {
        manifest_["dataset_fingerprint"][split] = lsub::fingerprint(data);
    }
    void input(const fs::path& p) { manifest_["inputs"].push_back(p.string()); }

    fs::path checkpoint(const std::string& name) {
        manifest_["checkpoints"].push_back(name);
        return dir_ / name;
    }
    void metric_file(const std::string& name, const std::string& content) {
        manifest_["metrics"].push_back(name);
        write_text(dir_ / name, content);
    }

    // Files that legitimately differ between runs, such as wall time.
    void log_file(const std::string& name, const std::string& content) {
        manifest_["logs"].push_back(name);
        write_text(dir_ / name, content);
    }

    void finish() { write_text(manifest_path(), manifest_.dump(2) + "\n"); }

private:
    std::string created_;
    std::string run_id_;
    fs::path dir_;
    Json manifest_;
};

Json resolve_config(const CommonOptions& opts, const fs::path& fallback_manifest) {
    Json config = default_config();
    if (!opts.config.empty()) {
        merge_config(config, read_config_file(opts.config));
    } else if (!fallback_manifest.empty() && fs::exists(fallback_manifest)) {
        merge_config(config, read_config_file(fallback_manifest));
    }
    for (const auto& s : opts.sets) apply_override(config, s);
    if (opts.seed) config["train"]["seed"] = *opts.seed;
    return config;
}

fs::path checkpoint_manifest(const std::string& arg) {
    if (arg.empty()) throw ConfigError("--checkpoint is required");
    fs::path p(arg);
    if (fs::is_directory(p)) p /= kSubspaceFile;
    if (!fs::exists(p)) throw IoError("checkpoint not found: " + p.string());
    return p;
}

fs::path run_manifest_near(const fs::path& checkpoint) {
    return checkpoint.parent_path() / "manifest.json";
}

void check_compatible(const NetworkSpec& spec, const Dataset& data) {
    if (spec.input_dim() != data.dim() || spec.num_classes() < data.num_classes) {
        throw ConfigError("checkpoint network (input " + std::to_string(spec.input_dim()) + ", " +
                          std::to_string(spec.num_classes()) + " classes) does not match dataset (input " +
                          std::to_string(data.dim()) + ", " + std::to_string(data.num_classes) + " classes)");
    }
}

std::string geometry_csv(const GeometryStats& g) {
    std::ostringstream out;
    out << "i,j,l2,cos2\n";
    for (const auto& p : g.pairs) out << p.i << ',' << p.j << ',' << fixed(p.l2, 8) << ',' << fixed(p.cos2, 8) << '\n';
    if (!g.pairs.empty()) out << "mean,mean," << fixed(g.mean_l2, 8) << ',' << fixed(g.mean_cos2, 8) << '\n';
    return out.str();
}

void echo_geometry(std::ostream& out, const GeometryStats& g) {
    for (const auto& p : g.pairs) {
        out << "pair " << p.i << '-' << p.j << ": l2 " << fixed(p.l2) << " cos2 " << fixed(p.cos2) << '\n';
    }
    if (g.pairs.size() > 1) out << "mean: l2 " << fixed(g.mean_l2) << " cos2 " << fixed(g.mean_cos2) << '\n';
}

int cmd_train(const CommonOptions& opts, std::ostream& out) {
    const Json config = resolve_config(opts, {});
    const Settings s(config);
    const Datasets data = s.load_data();
    const NetworkSpec spec = s.network_spec(data.train.dim(), data.train.num_classes);
    RunDir run("train", opts, config, s.seed);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    std::string metrics;
    std::string timing;
    auto log = [&](const EpochRecord& rec) {
        metrics += to_json_line(rec) + "\n";
        timing += Json{{"epoch", rec.epoch}, {"wall_seconds", rec.wall_seconds}}.dump() + "\n";
    };
    TrainResult result = train_run(spec, data.train, s.shape, s.train);
    for (const auto& rec : result.log) log(rec);

    save_subspace(run.checkpoint(kSubspaceFile), spec, result.subspace,
                  {{"dataset_fingerprint", fingerprint(data.train)}, {"seed", std::to_string(s.seed)}});
    run.metric_file("metrics.jsonl", metrics);
    run.log_file("timing.jsonl", timing);
    run.finish();

    out << "trained " << s.shape.tag() << " for " << s.train.epochs << " epochs -> " << run.dir().string() << '\n';
    echo_geometry(out, geometry_stats(result.subspace));
    return 0;
}

struct LoadedRun {
    Json config;
    LoadedSubspace loaded;
    fs::path checkpoint;
};

LoadedRun load_run(const CommonOptions& opts, const CommandOptions& cmd) {
    fs::path path = checkpoint_manifest(cmd.checkpoint);
    Json config = resolve_config(opts, run_manifest_near(path));
    return {std::move(config), load_subspace(path), std::move(path)};
}

int cmd_sweep(const CommonOptions& opts, const CommandOptions& cmd, std::ostream& out) {
    LoadedRun lr = load_run(opts, cmd);
    const Settings s(lr.config);
    const Datasets data = s.load_data();
    check_compatible(lr.loaded.spec, data.test);
    const auto grid = parse_grid(cmd.grid.empty() ? s.grid : cmd.grid);
    RunDir run("sweep", opts, lr.config, s.seed);
    run.input(lr.checkpoint);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    const auto rows = alpha_sweep(lr.loaded.spec, lr.loaded.subspace, data.train, data.test, grid, s.eval);
    std::ostringstream csv;
    csv << "alpha,accuracy,loss,ensemble_accuracy\n";
    for (const auto& row : rows) {
        csv << fixed(row.alpha) << ',' << fixed(row.accuracy) << ',' << fixed(row.loss) << ','
            << fixed(row.ensemble_accuracy) << '\n';
    }
    run.metric_file("sweep.csv", csv.str());
    run.finish();
    out << "swept " << rows.size() << " points -> " << (run.dir() / "sweep.csv").string() << '\n';
    return 0;
}

int cmd_eval(const CommonOptions& opts, const CommandOptions& cmd, std::ostream& out) {
    LoadedRun lr = load_run(opts, cmd);
    const Settings s(lr.config);
    const Datasets data = s.load_data();
    const auto& spec = lr.loaded.spec;
    const auto& sub = lr.loaded.subspace;
    check_compatible(spec, data.test);
    RunDir run("eval", opts, lr.config, s.seed);
    run.input(lr.checkpoint);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    std::vector<std::pair<std::string, double>> rows;
    std::vector<Matrix> endpoint_probs;
    for (std::size_t i = 0; i < sub.size(); ++i) {
        auto e = evaluate_params(spec, sub.endpoint(i), data.train, data.test, s.eval);
        rows.emplace_back("endpoint_" + std::to_string(i) + "_accuracy", e.accuracy);
        rows.emplace_back("endpoint_" + std::to_string(i) + "_ece", ece(e.probabilities, data.test.labels, s.eval.ece_bins));
        endpoint_probs.push_back(std::move(e.probabilities));
    }
    const ParamVector mid = eval_point(sub, midpoint_coord(sub.shape()));
    const auto m = evaluate_params(spec, mid, data.train, data.test, s.eval);
    rows.emplace_back("midpoint_accuracy", m.accuracy);
    rows.emplace_back("midpoint_loss", m.loss);
    rows.emplace_back("midpoint_ece", ece(m.probabilities, data.test.labels, s.eval.ece_bins));
    if (endpoint_probs.size() >= 2) {
        rows.emplace_back("endpoint_ensemble_accuracy",
                          accuracy_from_probs(ensemble_probs(endpoint_probs), data.test.labels));
        rows.emplace_back("endpoint_tv", tv_distance(endpoint_probs[0], endpoint_probs[1]));
        const auto g = geometry_stats(sub);
        rows.emplace_back("mean_l2", g.mean_l2);
        rows.emplace_back("mean_cos2", g.mean_cos2);
    }
    if (s.ensemble_members > 0 && sub.shape().kind == SubspaceKind::simplex) {
        Rng rng = make_rng(s.seed, streams::eval);
        const auto re = random_simplex_ensemble(spec, sub, data.train, data.test, s.ensemble_members, rng, s.eval);
        rows.emplace_back("random_ensemble_accuracy", re.ensemble_accuracy);
        rows.emplace_back("random_member_mean_accuracy", re.mean_member_accuracy());
    }
    if (s.corruption_severity > 0.0) {
        const Dataset corrupted = corrupt_gaussian(data.test, s.corruption_severity, derive_seed(s.seed, "corruption"));
        const double acc = evaluate_params(spec, mid, data.train, corrupted, s.eval).accuracy;
        rows.emplace_back("corrupted_midpoint_accuracy", acc);
        rows.emplace_back("midpoint_relative_change", relative_change(m.accuracy, acc));
    }

    std::ostringstream csv;
    csv << "metric,value\n";
    for (const auto& [k, v] : rows) csv << k << ',' << fixed(v) << '\n';
    run.metric_file("eval.csv", csv.str());
    run.finish();
    for (const auto& [k, v] : rows) out << k << ' ' << fixed(v) << '\n';
    return 0;
}

int cmd_geometry(const CommonOptions& opts, const CommandOptions& cmd, std::ostream& out) {
    std::optional<LoadedRun> lr;
    Json config;
    if (!cmd.checkpoint.empty()) {
        lr = load_run(opts, cmd);
        config = lr->config;
    } else {
        config = resolve_config(opts, {});
    }
    const Settings s(config);
    RunDir run("geometry", opts, config, s.seed);
    GeometryStats g;
    if (lr) {
        run.input(lr->checkpoint);
        g = geometry_stats(lr->loaded.subspace);
    } else {
        // A freshly initialized subspace, as training would start from.
        const NetworkSpec spec = s.network_spec(s.data.dim, s.data.classes);
        Rng rng = make_rng(s.seed, streams::init);
        g = geometry_stats(init_subspace(spec, s.shape, s.train.point_init, rng));
    }
    run.metric_file("geometry.csv", geometry_csv(g));
    run.finish();
    echo_geometry(out, g);
    return 0;
}

int cmd_plane(const CommonOptions& opts, const CommandOptions& cmd, std::ostream& out) {
    LoadedRun lr = load_run(opts, cmd);
    const Settings s(lr.config);
    const auto& sub = lr.loaded.subspace;
    if (sub.size() < 3) {
        throw InputError("plane needs a subspace with at least three parameter vectors, got " +
                         std::to_string(sub.size()));
    }
    const Datasets data = s.load_data();
    check_compatible(lr.loaded.spec, data.test);
    RunDir run("plane", opts, lr.config, s.seed);
    run.input(lr.checkpoint);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    const auto grid = plane_grid(lr.loaded.spec, sub.endpoint(0), sub.endpoint(1), sub.endpoint(2), data.train,
                                 data.test, s.plane_resolution, s.plane_margin, s.eval);
    std::ostringstream cells;
    cells << "x,y,loss,error\n";
    for (const auto& c : grid.cells) {
        cells << fixed(c.x) << ',' << fixed(c.y) << ',' << fixed(c.loss) << ',' << fixed(c.error) << '\n';
    }
    std::ostringstream anchors;
    anchors << "point,x,y,loss,error\n";
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& c = grid.anchor_cells[i];
        anchors << "w" << i + 1 << ',' << fixed(c.x) << ',' << fixed(c.y) << ',' << fixed(c.loss) << ','
                << fixed(c.error) << '\n';
    }
    run.metric_file("plane.csv", cells.str());
    run.metric_file("plane_points.csv", anchors.str());
    run.finish();
    out << "plane grid " << grid.resolution << "x" << grid.resolution << " -> " << run.dir().string() << '\n';
    return 0;
}

int cmd_instability(const CommonOptions& opts, std::ostream& out) {
    const Json config = resolve_config(opts, {});
    const Settings s(config);
    const Datasets data = s.load_data();
    const NetworkSpec spec = s.network_spec(data.train.dim(), data.train.num_classes);
    RunDir run("instability", opts, config, s.seed);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    const auto r = instability_run(spec, data.train, data.test, s.train, s.instability, s.eval);
    run.metric_file("instability.csv", instability_csv(r));
    run.finish();
    out << "k " << r.k << " of " << r.total_epochs << ", " << r.num_models << " forks: mean accuracy "
        << fixed(r.mean_fork_accuracy()) << ", path spread " << fixed(r.path_spread()) << ", weight average "
        << fixed(r.weight_average_accuracy) << ", output ensemble " << fixed(r.output_ensemble_accuracy) << '\n';
    return 0;
}

int cmd_integral(const CommonOptions& opts, const CommandOptions& cmd, std::ostream& out) {
    Json config = resolve_config(opts, {});
    if (cmd.epsilon) config["integral"]["epsilon"] = *cmd.epsilon;
    const Settings s(config);
    const Datasets data = s.load_data();
    const NetworkSpec spec = s.network_spec(data.train.dim(), data.train.num_classes);
    RunDir run("integral", opts, config, s.seed);
    run.fingerprint("train", data.train);
    run.fingerprint("test", data.test);

    const IntegralModelState state = integral_train(spec, data.train, s.train, s.epsilon);
    const Matrix probs = integral_predict(spec, state, data.train, data.test.inputs, s.eval.bn_batch_size);
    const double acc = accuracy_from_probs(probs, data.test.labels);
    const double start = evaluate_params(spec, state.line.endpoint(0), data.train, data.test, s.eval).accuracy;

    save_subspace(run.checkpoint("integral.ckpt"), spec, state.line, {{"epsilon", fixed(s.epsilon, 17)}});
    std::ostringstream csv;
    csv << "metric,value\n";
    csv << "epsilon," << fixed(s.epsilon) << '\n';
    csv << "integral_accuracy," << fixed(acc) << '\n';
    csv << "integral_ece," << fixed(ece(probs, data.test.labels, s.eval.ece_bins)) << '\n';
    csv << "start_point_accuracy," << fixed(start) << '\n';
    run.metric_file("integral.csv", csv.str());
    run.finish();
    out << "integral model (epsilon " << s.epsilon << "): accuracy " << fixed(acc) << '\n';
    return 0;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train and evaluate neural network subspaces", "lsub"};
    app.require_subcommand(1);

    CommonOptions opts;
    CommandOptions cmd;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "JSON config file or run manifest");
        sub->add_option("--seed", opts.seed, "Root seed (overrides train.seed)");
        sub->add_option("--out-dir", opts.out_dir, "Output directory (default $LSUB_OUT_ROOT/<run id>)");
        sub->add_option("--run-id", opts.run_id, "Run id used for the default output directory");
        sub->add_option("--set", opts.sets, "Override a config value, key.path=value")->take_all();
        sub->add_flag("--overwrite", opts.overwrite, "Replace an existing run manifest");
    };

    auto* train = app.add_subcommand("train", "Train a subspace");
    auto* sweep = app.add_subcommand("sweep", "Accuracy and ensemble accuracy along the subspace");
    auto* eval = app.add_subcommand("eval", "Endpoint, midpoint, ensemble and calibration metrics");
    auto* geometry = app.add_subcommand("geometry", "Pairwise L2 distance and squared cosine of endpoints");
    auto* plane = app.add_subcommand("plane", "Loss and error over the plane through three endpoints");
    auto* instability = app.add_subcommand("instability", "Forked-run linear path and mixture analysis");
    auto* integral = app.add_subcommand("integral", "Train and evaluate the integral-ensemble model");
    for (auto* sub : {train, sweep, eval, geometry, plane, instability, integral}) add_common(sub);
    for (auto* sub : {sweep, eval, plane}) {
        sub->add_option("--checkpoint", cmd.checkpoint, "Subspace checkpoint or run directory")->required();
    }
    geometry->add_option("--checkpoint", cmd.checkpoint, "Subspace checkpoint or run directory (default: fresh init)");
    sweep->add_option("--grid", cmd.grid, "Grid lo:hi:step (default eval.grid)");
    integral->add_option("--epsilon", cmd.epsilon, "Finite-difference step (default integral.epsilon)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(opts, out);
        if (*sweep) return cmd_sweep(opts, cmd, out);
        if (*eval) return cmd_eval(opts, cmd, out);
        if (*geometry) return cmd_geometry(opts, cmd, out);
        if (*plane) return cmd_plane(opts, cmd, out);
        if (*instability) return cmd_instability(opts, out);
        if (*integral) return cmd_integral(opts, cmd, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace lsub::cli
