// Command-line front end: train, eval, baseline and gen-map subcommands tying
// JSON experiment configs to the library. See README.md for usage.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beaconopt/beaconopt.hpp"

namespace fs = std::filesystem;
using namespace beaconopt;

namespace {

fs::path resolve_output_dir(const std::string& dir) {
    fs::path p(dir);
    const char* root = std::getenv("BEACONOPT_OUTPUT_ROOT");
    if (root && *root && p.is_relative()) p = fs::path(root) / p;
    return p;
}

std::string timestamp_utc() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void print_report_line(const EvalReport& r) {
    std::string line = "inference=" + r.inference + " rmse=" + fmt6(r.rmse) +
                       " worst_case=" + fmt6(r.worst_case_rmse);
    for (std::size_t i = 0; i < r.thresholds.size(); ++i)
        line += " fail(" + fmt6(r.thresholds[i]) + ")=" + fmt6(r.failure_rates[i]);
    line += " beacons=" + std::to_string(r.beacon_count);
    std::cout << line << '\n';
}

std::string sanitize_tag(std::string tag) {
    for (char& c : tag)
        if (c == '(' || c == ')' || c == '/') c = '_';
    while (!tag.empty() && tag.back() == '_') tag.pop_back();
    return tag;
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

ExperimentConfig load_experiment(const CommonArgs& args, bool seed_is_eval = false) {
    std::vector<std::string> ov = args.overrides;
    if (args.seed)
        ov.push_back((seed_is_eval ? "eval.seed=" : "train.seed=") + std::to_string(*args.seed));
    return load_config(args.config_path, ov);
}

int cmd_train(const CommonArgs& args, const std::string& placement_path,
              const std::string& resume_path) {
    const ExperimentConfig cfg = load_experiment(args);
    const MapSpec map = load_map(cfg.map_path);
    const fs::path out_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(out_dir / "snapshots");

    write_json(config_to_json(cfg), out_dir / "run_config.json");
    std::ofstream log_out(out_dir / "train_log.jsonl");
    if (!log_out) throw std::runtime_error("cannot write training log");

    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = timestamp_utc();

    TrainHooks hooks;
    hooks.on_log = [&](const TrainLogRecord& r) { log_out << log_record_to_json(r).dump() << '\n'; };
    hooks.on_snapshot = [&](std::int64_t iter, const Placement& p) {
        char name[64];
        std::snprintf(name, sizeof name, "placement_%09lld.json", static_cast<long long>(iter));
        save_placement(p, map.name, (out_dir / "snapshots" / name).string());
    };
    hooks.on_checkpoint = [&](std::int64_t, const TrainState& s) {
        save_checkpoint(s, (out_dir / "checkpoint.bin").string());
    };
    hooks.on_diverge = [&](const TrainState& s, const TrainLogRecord& r) {
        save_checkpoint(s, (out_dir / "diverged_checkpoint.bin").string());
        write_json(log_record_to_json(r), out_dir / "diverged_record.json");
    };

    std::optional<TrainState> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);

    TrainResult result;
    if (!placement_path.empty()) {
        const Placement placement = load_placement(placement_path);
        result = train_inference_only(map, cfg.propagation, placement, cfg.net, cfg.train, hooks,
                                      resume ? &*resume : nullptr);
    } else {
        result = train_joint(map, cfg.propagation, cfg.channels, cfg.net, cfg.train, hooks,
                             resume ? &*resume : nullptr);
    }
    log_out.close();

    save_net(result.net, (out_dir / "weights.bin").string());
    write_json(net_config_to_json(result.net.cfg), out_dir / "weights.json");
    save_placement(result.placement, map.name, (out_dir / "placement.json").string());
    {
        char name[64];
        std::snprintf(name, sizeof name, "placement_%09lld.json",
                      static_cast<long long>(cfg.train.total_iters));
        save_placement(result.placement, map.name, (out_dir / "snapshots" / name).string());
    }

    // Validate what was written before claiming success.
    (void)load_net((out_dir / "weights.bin").string());
    (void)load_placement((out_dir / "placement.json").string());

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json meta;
    meta["run_name"] = cfg.run_name;
    meta["started_at"] = started;
    meta["finished_at"] = timestamp_utc();
    meta["wall_seconds"] = wall;
    write_json(meta, out_dir / "run_meta.json");

    std::cout << "trained " << cfg.run_name << ": beacons=" << result.placement.beacon_count()
              << " iters=" << cfg.train.total_iters << " wall=" << fmt6(wall) << "s -> "
              << out_dir.string() << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& placement_path,
             const std::string& weights_path, int knn_k, bool oracle) {
    const ExperimentConfig cfg = load_experiment(args, /*seed_is_eval=*/true);
    const MapSpec map = load_map(cfg.map_path);
    const fs::path out_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    const Placement placement = load_placement(placement_path);

    const int sources = (!weights_path.empty() ? 1 : 0) + (knn_k > 0 ? 1 : 0) + (oracle ? 1 : 0);
    if (sources != 1)
        throw std::runtime_error("eval needs exactly one of --weights, --knn or --oracle");

    EvalReport report;
    NetParams net;
    FingerprintDB db;
    if (!weights_path.empty()) {
        net = load_net(weights_path);
        if (net.cfg.input_dim != placement.channels)
            throw std::runtime_error(
                "dimension mismatch: weights expect C=" + std::to_string(net.cfg.input_dim) +
                " but the placement has C=" + std::to_string(placement.channels));
        report = evaluate(placement, net_predictor(net), map, cfg.propagation, cfg.eval);
        report.inference = "net";
    } else if (knn_k > 0) {
        Rng rng(Rng::derive(cfg.eval.seed, 0xdb));
        db = knn_build(placement, map, cfg.propagation, 50, 35, rng);
        if (knn_k > db.size()) throw std::runtime_error("--knn k exceeds the database size");
        report = evaluate(placement, knn_predictor(db, knn_k), map, cfg.propagation, cfg.eval);
        report.inference = "knn(" + std::to_string(knn_k) + ")";
    } else {
        report = evaluate(placement, oracle_predictor(), map, cfg.propagation, cfg.eval);
        report.inference = "oracle";
    }

    const std::string tag = sanitize_tag(report.inference);
    save_report(report, (out_dir / ("report_" + tag + ".json")).string());
    error_map(report, (out_dir / ("error_map_" + tag + ".csv")).string());
    print_report_line(report);
    return 0;
}

int cmd_baseline(const CommonArgs& args, const std::vector<std::string>& handcrafted,
                 const std::string& preset, bool knn_sweep, std::string placement_path,
                 int db_rows, int db_cols) {
    const ExperimentConfig cfg = load_experiment(args, /*seed_is_eval=*/true);
    const MapSpec map = load_map(cfg.map_path);
    const fs::path out_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    if (!handcrafted.empty() && !preset.empty())
        throw std::runtime_error("--handcrafted and --preset are mutually exclusive");

    if (!handcrafted.empty()) {
        const double spacing = std::stod(handcrafted.at(0));
        const ChannelRule rule = channel_rule_from_string(handcrafted.at(1));
        const Placement p =
            handcrafted_placement(map, cfg.channels, spacing, rule, cfg.train.seed);
        const fs::path path = out_dir / "placement_handcrafted.json";
        save_placement(p, map.name, path.string());
        std::cout << "handcrafted placement: beacons=" << p.beacon_count() << " -> "
                  << path.string() << '\n';
        if (placement_path.empty()) placement_path = path.string();
    } else if (!preset.empty()) {
        // Preset lattices sized to the reference beacon budgets: A = 16x34
        // (544 beacons), B = 10x18 (180 beacons), round-robin channels.
        Placement p;
        if (preset == "A")
            p = handcrafted_lattice(map, cfg.channels, 16, 34, ChannelRule::round_robin);
        else if (preset == "B")
            p = handcrafted_lattice(map, cfg.channels, 10, 18, ChannelRule::round_robin);
        else
            throw std::runtime_error("unknown preset '" + preset + "' (A|B)");
        const fs::path path = out_dir / ("placement_handcrafted_" + preset + ".json");
        save_placement(p, map.name, path.string());
        std::cout << "handcrafted preset " << preset << ": beacons=" << p.beacon_count() << " -> "
                  << path.string() << '\n';
        if (placement_path.empty()) placement_path = path.string();
    }

    if (knn_sweep) {
        if (placement_path.empty())
            throw std::runtime_error("--knn-sweep needs --placement (or a generated handcrafted)");
        const Placement placement = load_placement(placement_path);
        Rng rng(Rng::derive(cfg.eval.seed, 0xdb));
        const FingerprintDB db = knn_build(placement, map, cfg.propagation, db_rows, db_cols, rng);
        const std::vector<int> ks{1, 5, 10, 20};
        int best_k = 0;
        double best_rmse = 0.0;
        for (int k : ks) {
            if (k > db.size()) continue;
            EvalReport r = evaluate(placement, knn_predictor(db, k), map, cfg.propagation, cfg.eval);
            r.inference = "knn(" + std::to_string(k) + ")";
            save_report(r, (out_dir / ("report_knn_k" + std::to_string(k) + ".json")).string());
            print_report_line(r);
            if (best_k == 0 || r.rmse < best_rmse) {
                best_k = k;
                best_rmse = r.rmse;
            }
        }
        nlohmann::json best;
        best["best_k"] = best_k;
        best["rmse"] = best_rmse;
        best["candidates"] = ks;
        write_json(best, out_dir / "knn_best.json");
        std::cout << "knn best: k=" << best_k << " rmse=" << fmt6(best_rmse) << '\n';
    }
    return 0;
}

int cmd_gen_map(const std::string& out_path, std::string name, double width, double height,
                int rows, int cols, int dividers, double gap) {
    MapSpec map;
    if (name.empty()) name = fs::path(out_path).stem().string();
    map.name = name;
    map.width = width;
    map.height = height;
    map.grid.rows = rows;
    map.grid.cols = cols;
    // Serpentine room dividers: vertical walls with alternating doorways.
    for (int i = 1; i <= dividers; ++i) {
        const double x = width * i / (dividers + 1);
        Segment wall;
        if (i % 2 == 1)
            wall = {{x, 0.0}, {x, height * (1.0 - gap)}};
        else
            wall = {{x, height * gap}, {x, height}};
        map.walls.push_back(wall);
    }
    validate_map(map);
    if (!out_path.empty()) {
        const fs::path parent = fs::path(out_path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }
    save_map(map, out_path);
    std::cout << "wrote map '" << map.name << "' (" << map.walls.size() << " walls, grid "
              << rows << "x" << cols << ") -> " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint beacon placement and localization-network optimization"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, base_args;
    std::string train_placement, train_resume;

    CLI::App* train = app.add_subcommand("train", "Train jointly, or inference-only with --placement");
    train->add_option("config", train_args.config_path, "Experiment config JSON")->required();
    train->add_option("--override,-O", train_args.overrides, "Dotted-path config override key=value");
    train->add_option("--seed", train_args.seed, "Override train.seed");
    train->add_option("--placement", train_placement, "Fixed placement file (inference-only training)");
    train->add_option("--resume", train_resume, "Resume from a checkpoint file");

    std::string eval_placement, eval_weights;
    int eval_knn = 0;
    bool eval_oracle = false;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a placement with a trained net, kNN or oracle");
    eval->add_option("config", eval_args.config_path, "Experiment config JSON")->required();
    eval->add_option("--override,-O", eval_args.overrides, "Dotted-path config override key=value");
    eval->add_option("--seed", eval_args.seed, "Override eval.seed");
    eval->add_option("--placement", eval_placement, "Placement file")->required();
    eval->add_option("--weights", eval_weights, "Weights file (network inference)");
    eval->add_option("--knn", eval_knn, "kNN inference with this neighbor count");
    eval->add_flag("--oracle", eval_oracle, "True-location oracle (plumbing check)");

    std::vector<std::string> base_handcrafted;
    std::string base_preset, base_placement;
    bool base_knn_sweep = false;
    int base_db_rows = 50, base_db_cols = 35;
    CLI::App* baseline = app.add_subcommand("baseline", "Handcrafted placements and kNN sweeps");
    baseline->add_option("config", base_args.config_path, "Experiment config JSON")->required();
    baseline->add_option("--override,-O", base_args.overrides, "Dotted-path config override key=value");
    baseline->add_option("--seed", base_args.seed, "Override eval.seed");
    baseline->add_option("--handcrafted", base_handcrafted,
                         "Uniform lattice: SPACING CHANNEL_RULE (round_robin|random)")
        ->expected(2);
    baseline->add_option("--preset", base_preset, "Handcrafted preset A (544 beacons) or B (180)");
    baseline->add_flag("--knn-sweep", base_knn_sweep, "Sweep k in {1,5,10,20}, emit per-k reports");
    baseline->add_option("--placement", base_placement, "Placement for the kNN sweep");
    baseline->add_option("--db-rows", base_db_rows, "Fingerprint lattice rows");
    baseline->add_option("--db-cols", base_db_cols, "Fingerprint lattice cols");

    std::string gm_out, gm_name;
    double gm_width = 1.0, gm_height = 0.7, gm_gap = 0.3;
    int gm_rows = 25, gm_cols = 25, gm_dividers = 0;
    CLI::App* genmap = app.add_subcommand("gen-map", "Write a rectangular map with room dividers");
    genmap->add_option("--out", gm_out, "Output map JSON path")->required();
    genmap->add_option("--name", gm_name, "Map name (default: file stem)");
    genmap->add_option("--width", gm_width, "Map width in map units");
    genmap->add_option("--height", gm_height, "Map height in map units");
    genmap->add_option("--rows", gm_rows, "Candidate grid rows");
    genmap->add_option("--cols", gm_cols, "Candidate grid cols");
    genmap->add_option("--dividers", gm_dividers, "Number of interior divider walls");
    genmap->add_option("--gap", gm_gap, "Doorway fraction of each divider");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train)) return cmd_train(train_args, train_placement, train_resume);
        if (app.got_subcommand(eval))
            return cmd_eval(eval_args, eval_placement, eval_weights, eval_knn, eval_oracle);
        if (app.got_subcommand(baseline))
            return cmd_baseline(base_args, base_handcrafted, base_preset, base_knn_sweep,
                                base_placement, base_db_rows, base_db_cols);
        if (app.got_subcommand(genmap))
            return cmd_gen_map(gm_out, gm_name, gm_width, gm_height, gm_rows, gm_cols, gm_dividers,
                               gm_gap);
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
