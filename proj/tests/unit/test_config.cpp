#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support/test_support.hpp"

using namespace beaconopt;

namespace {

nlohmann::json sample_config() {
    return nlohmann::json{
        {"run_name", "sample"},
        {"map", "maps/m.json"},
        {"output_dir", "runs/sample"},
        {"channels", 4},
        {"propagation",
         {{"P0", 6.25e-4}, {"zeta", 2.0}, {"beta", 0.36787944117144233}, {"sigma_z2", 1e-4},
          {"tau", 1.0}, {"r_min", 1e-3}}},
        {"net",
         {{"blocks", 3}, {"layers_per_block", 2}, {"hidden_width", 128}, {"pool_group", 4}}},
        {"train",
         {{"total_iters", 30000},
          {"batch_size", 256},
          {"momentum", 0.9},
          {"seed", 1},
          {"lr_schedule", {{0, 0.01}, {27000, 0.001}}},
          {"temperature", {{"alpha0", 1.0}, {"gamma", 1.6e-6}, {"argmax_switch_iter", 25000}}},
          {"reg", {{"mode", "fixed"}, {"lambda0", 0.02}}},
          {"snapshot_period", 5000}}},
        {"eval",
         {{"grid_rows", 70}, {"grid_cols", 100}, {"samples_per_location", 30},
          {"thresholds", {0.1, 0.2, 0.5}}, {"seed", 424242}}}};
}

}  // namespace

TEST_CASE("experiment config parsing", "[config]") {
    const ExperimentConfig c = config_from_json(sample_config());
    CHECK(c.run_name == "sample");
    CHECK(c.channels == 4);
    CHECK(c.net.input_dim == 4);  // derived from channels
    CHECK(c.net.hidden_width == 128);
    CHECK(c.train.total_iters == 30000);
    CHECK(c.train.temperature.argmax_switch_iter == 25000);
    CHECK(c.train.lr_schedule.size() == 2);
    CHECK(c.train.lr_schedule[1].start_iter == 27000);
    CHECK(c.train.reg.mode == RegMode::fixed);
    CHECK(c.train.reg.sign == RegSign::penalize_beacons);
    CHECK(c.eval.samples_per_location == 30);
    CHECK(c.propagation.beta == 0.36787944117144233);
}

TEST_CASE("config validation failures", "[config]") {
    SECTION("bad channel count") {
        nlohmann::json j = sample_config();
        j["channels"] = 0;
        REQUIRE_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SECTION("bad reg mode") {
        nlohmann::json j = sample_config();
        j["train"]["reg"]["mode"] = "sometimes";
        REQUIRE_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SECTION("switch after the end of training") {
        nlohmann::json j = sample_config();
        j["train"]["temperature"]["argmax_switch_iter"] = 40000;
        REQUIRE_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SECTION("batch size below 2") {
        nlohmann::json j = sample_config();
        j["train"]["batch_size"] = 1;
        REQUIRE_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
}

TEST_CASE("dotted-path overrides", "[config]") {
    nlohmann::json j = sample_config();
    apply_override(j, "train.total_iters=1000");
    apply_override(j, "train.temperature.argmax_switch_iter=800");
    apply_override(j, "propagation.beta=0.5");
    apply_override(j, "train.reg.mode=annealed");
    apply_override(j, "train.lr_schedule=[[0,0.02]]");
    const ExperimentConfig c = config_from_json(j);
    CHECK(c.train.total_iters == 1000);
    CHECK(c.train.temperature.argmax_switch_iter == 800);
    CHECK(c.propagation.beta == 0.5);
    CHECK(c.train.reg.mode == RegMode::annealed);
    REQUIRE(c.train.lr_schedule.size() == 1);
    CHECK(c.train.lr_schedule[0].lr == 0.02);
    REQUIRE_THROWS_AS(apply_override(j, "no_equals_sign"), std::invalid_argument);
}

TEST_CASE("config file loading resolves the map path", "[config]") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "beaconopt_test_cfg";
    fs::create_directories(dir / "maps");
    {
        MapSpec m;
        m.name = "cfg-map";
        m.width = 1.0;
        m.height = 0.7;
        m.grid.rows = 3;
        m.grid.cols = 3;
        save_map(m, (dir / "maps" / "m.json").string());
        std::ofstream out(dir / "cfg.json");
        out << sample_config().dump(2);
    }
    const ExperimentConfig c =
        load_config((dir / "cfg.json").string(), {"train.total_iters=500",
                                                  "train.temperature.argmax_switch_iter=400",
                                                  "train.lr_schedule=[[0,0.01]]"});
    CHECK(c.train.total_iters == 500);
    const MapSpec m = load_map(c.map_path);
    CHECK(m.name == "cfg-map");
    fs::remove_all(dir);
}

TEST_CASE("config JSON round trip", "[config]") {
    const ExperimentConfig c = config_from_json(sample_config());
    const nlohmann::json j = config_to_json(c);
    const ExperimentConfig back = config_from_json(j);
    CHECK(back.channels == c.channels);
    CHECK(back.train.total_iters == c.train.total_iters);
    CHECK(back.train.temperature.gamma == c.train.temperature.gamma);
    CHECK(back.eval.thresholds == c.eval.thresholds);
    CHECK(back.propagation.P0 == c.propagation.P0);
    CHECK(config_to_json(back) == j);
}
