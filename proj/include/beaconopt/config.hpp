#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beaconopt/environment.hpp"
#include "beaconopt/evaluation.hpp"
#include "beaconopt/net.hpp"
#include "beaconopt/serialize.hpp"
#include "beaconopt/training.hpp"

namespace beaconopt {

// A full experiment: map, signal model, network, training and evaluation
// settings. Serialized as a single JSON document; command-line overrides use
// dotted paths into that document ("train.total_iters=1000").
struct ExperimentConfig {
    std::string run_name;
    std::string map_path;  // resolved against the config file's directory
    std::string output_dir;
    int channels = 8;
    PropagationParams propagation;
    NetConfig net;
    TrainConfig train;
    EvalConfig eval;
    double acceptance_rmse_max = 0.0;  // desk-scale pilot calibration; 0 = unset
};

inline nlohmann::json propagation_to_json(const PropagationParams& p) {
    return {{"P0", p.P0},           {"zeta", p.zeta}, {"beta", p.beta},
            {"sigma_z2", p.sigma_z2}, {"tau", p.tau},   {"r_min", p.r_min}};
}

inline PropagationParams propagation_from_json(const nlohmann::json& j) {
    PropagationParams p;
    p.P0 = j.value("P0", p.P0);
    p.zeta = j.value("zeta", p.zeta);
    p.beta = j.value("beta", p.beta);
    p.sigma_z2 = j.value("sigma_z2", p.sigma_z2);
    p.tau = j.value("tau", p.tau);
    p.r_min = j.value("r_min", p.r_min);
    validate_propagation(p);
    return p;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json lr = nlohmann::json::array();
    for (const LrStep& s : c.lr_schedule) lr.push_back({s.start_iter, s.lr});
    return {{"total_iters", c.total_iters},
            {"batch_size", c.batch_size},
            {"lr_schedule", lr},
            {"momentum", c.momentum},
            {"seed", c.seed},
            {"temperature",
             {{"alpha0", c.temperature.alpha0},
              {"gamma", c.temperature.gamma},
              {"argmax_switch_iter", c.temperature.argmax_switch_iter}}},
            {"reg",
             {{"mode", c.reg.mode == RegMode::fixed ? "fixed" : "annealed"},
              {"lambda0", c.reg.lambda0},
              {"eta", c.reg.eta},
              {"period", c.reg.period},
              {"sign", c.reg.sign == RegSign::penalize_beacons ? "penalize_beacons" : "as_printed"}}},
            {"snapshot_period", c.snapshot_period},
            {"log_period", c.log_period},
            {"logit_init_std", c.logit_init_std}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.total_iters = j.value("total_iters", c.total_iters);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("lr_schedule")) {
        c.lr_schedule.clear();
        for (const auto& s : j.at("lr_schedule"))
            c.lr_schedule.push_back({s.at(0).get<std::int64_t>(), s.at(1).get<double>()});
    }
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    if (j.contains("temperature")) {
        const auto& t = j.at("temperature");
        c.temperature.alpha0 = t.value("alpha0", c.temperature.alpha0);
        c.temperature.gamma = t.value("gamma", c.temperature.gamma);
        c.temperature.argmax_switch_iter =
            t.value("argmax_switch_iter", c.temperature.argmax_switch_iter);
    }
    if (j.contains("reg")) {
        const auto& r = j.at("reg");
        const std::string mode = r.value("mode", std::string("fixed"));
        if (mode == "fixed")
            c.reg.mode = RegMode::fixed;
        else if (mode == "annealed")
            c.reg.mode = RegMode::annealed;
        else
            throw std::invalid_argument("reg.mode must be 'fixed' or 'annealed'");
        c.reg.lambda0 = r.value("lambda0", c.reg.lambda0);
        c.reg.eta = r.value("eta", c.reg.eta);
        c.reg.period = r.value("period", c.reg.period);
        const std::string sign = r.value("sign", std::string("penalize_beacons"));
        if (sign == "penalize_beacons")
            c.reg.sign = RegSign::penalize_beacons;
        else if (sign == "as_printed")
            c.reg.sign = RegSign::as_printed;
        else
            throw std::invalid_argument("reg.sign must be 'penalize_beacons' or 'as_printed'");
    }
    c.snapshot_period = j.value("snapshot_period", c.snapshot_period);
    c.log_period = j.value("log_period", c.log_period);
    c.logit_init_std = j.value("logit_init_std", c.logit_init_std);
    validate_train_config(c);
    return c;
}

inline nlohmann::json eval_config_to_json(const EvalConfig& c) {
    return {{"grid_rows", c.grid_rows},
            {"grid_cols", c.grid_cols},
            {"samples_per_location", c.samples_per_location},
            {"thresholds", c.thresholds},
            {"seed", c.seed}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
    EvalConfig c;
    c.grid_rows = j.value("grid_rows", c.grid_rows);
    c.grid_cols = j.value("grid_cols", c.grid_cols);
    c.samples_per_location = j.value("samples_per_location", c.samples_per_location);
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    validate_eval_config(c);
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["run_name"] = c.run_name;
    j["map"] = c.map_path;
    j["output_dir"] = c.output_dir;
    j["channels"] = c.channels;
    j["propagation"] = propagation_to_json(c.propagation);
    nlohmann::json net = net_config_to_json(c.net);
    net.erase("input_dim");  // derived from the channel count
    j["net"] = net;
    j["train"] = train_config_to_json(c.train);
    j["eval"] = eval_config_to_json(c.eval);
    if (c.acceptance_rmse_max > 0.0) j["acceptance_rmse_max"] = c.acceptance_rmse_max;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c.run_name = j.value("run_name", std::string("run"));
        c.map_path = j.at("map").get<std::string>();
        c.output_dir = j.value("output_dir", std::string("runs/") + c.run_name);
        c.channels = j.value("channels", c.channels);
        if (c.channels < 1) throw std::invalid_argument("channels must be >= 1");
        if (j.contains("propagation")) c.propagation = propagation_from_json(j.at("propagation"));
        nlohmann::json net = j.value("net", nlohmann::json::object());
        net["input_dim"] = c.channels;
        c.net = net_config_from_json(net);
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
        c.acceptance_rmse_max = j.value("acceptance_rmse_max", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config schema error: ") + e.what());
    }
    return c;
}

// Applies one "dotted.path=value" override in place. The value is parsed as a
// JSON literal when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override '" + spec + "' is not of the form path=value");
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // bare string
    }
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("override '" + spec + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// Loads a config file, applies overrides, resolves the map path relative to
// the config file's directory and returns the parsed experiment.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config file " + path + ": " + e.what());
    }
    for (const std::string& o : overrides) apply_override(j, o);
    ExperimentConfig c = config_from_json(j);
    const std::filesystem::path map_path(c.map_path);
    if (map_path.is_relative())
        c.map_path = (std::filesystem::path(path).parent_path() / map_path).string();
    return c;
}

}  // namespace beaconopt
