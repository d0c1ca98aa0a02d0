// Minimal end-to-end use of the library: build a small map in code, jointly
// train a placement and an inference net at toy scale, then evaluate it
// against a handcrafted baseline.

#include <cstdio>

#include "beaconopt/beaconopt.hpp"

using namespace beaconopt;

int main() {
    MapSpec map;
    map.name = "quickstart";
    map.width = 1.0;
    map.height = 0.7;
    map.walls.push_back({{0.5, 0.0}, {0.5, 0.5}});
    map.grid.rows = 6;
    map.grid.cols = 6;
    validate_map(map);

    PropagationParams prop;  // reference constants

    const int channels = 4;
    NetConfig net;
    net.input_dim = channels;
    net.blocks = 2;
    net.hidden_width = 64;

    TrainConfig train;
    train.total_iters = 4000;
    train.batch_size = 64;
    train.seed = 7;
    train.temperature.argmax_switch_iter = 3000;
    train.temperature.gamma = 1e-4;  // reaches alpha ~ 900 at the switch
    train.reg.lambda0 = 0.02;
    train.snapshot_period = 0;
    train.log_period = 500;

    std::printf("training (toy scale, %lld iterations)...\n",
                static_cast<long long>(train.total_iters));
    TrainHooks hooks;
    hooks.on_log = [](const TrainLogRecord& r) {
        std::printf("  iter %6lld  loss %.4f  mse %.4f  beacons %d\n",
                    static_cast<long long>(r.iter), r.loss, r.mse, r.beacon_count);
    };
    const TrainResult result = train_joint(map, prop, channels, net, train, hooks);

    EvalConfig eval;
    eval.grid_rows = 35;
    eval.grid_cols = 50;
    eval.samples_per_location = 10;
    eval.seed = 99;

    const EvalReport learned =
        evaluate(result.placement, net_predictor(result.net), map, prop, eval);
    std::printf("learned placement : %2d beacons, rmse %.4f, worst-case %.4f\n",
                learned.beacon_count, learned.rmse, learned.worst_case_rmse);

    const Placement grid = handcrafted_lattice(map, channels, 4, 6, ChannelRule::round_robin);
    Rng db_rng(123);
    const FingerprintDB db = knn_build(grid, map, prop, 25, 18, db_rng);
    const EvalReport knn = evaluate(grid, knn_predictor(db, 5), map, prop, eval);
    std::printf("handcrafted + kNN : %2d beacons, rmse %.4f, worst-case %.4f\n", knn.beacon_count,
                knn.rmse, knn.worst_case_rmse);
    return 0;
}
