#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "tppt/dataset.hpp"
#include "tppt/error.hpp"

using namespace tppt;

TEST_CASE("rescale keeps full-length trajectories unchanged") {
    const Trajectory traj{3, 1, 4, 1, 5};
    CHECK(rescale_trajectory(traj, 5) == traj);
}

TEST_CASE("rescale downsamples and upsamples by nearest neighbor") {
    CHECK(rescale_trajectory({1, 2, 3, 4}, 2) == Trajectory{1, 3});
    CHECK(rescale_trajectory({1, 2}, 4) == Trajectory{1, 1, 2, 2});
}

TEST_CASE("rescale rejects empty input") {
    CHECK_THROWS_AS(rescale_trajectory({}, 4), Error);
    CHECK_THROWS_AS(rescale_trajectory({0, 0, 0}, 4), Error);
}

TEST_CASE("select_checkpoints sizes and determinism") {
    const RoadNetwork net = grid_network(5, 5);
    Rng rng(9);
    const CheckpointSet all = select_checkpoints(net, 1.0, rng);
    CHECK(all.nodes().size() == 25);

    // round(alpha * V) at the paper's city size
    std::vector<Edge> edges;
    for (int v = 1; v < 241; ++v) edges.push_back({v, v + 1, 1.0, {}});
    const RoadNetwork big(241, edges);
    Rng rng2(9);
    CHECK(select_checkpoints(big, 0.5, rng2).nodes().size() == 121);

    Rng a(42), b(42);
    CHECK(select_checkpoints(net, 0.3, a).nodes() == select_checkpoints(net, 0.3, b).nodes());

    Rng c(1);
    CHECK_THROWS_AS(select_checkpoints(net, 0.0, c), Error);
    CHECK_THROWS_AS(select_checkpoints(net, -0.5, c), Error);
    CHECK_THROWS_AS(select_checkpoints(net, 1.5, c), Error);
}

TEST_CASE("pretrain_mask boundary ratios") {
    const Trajectory traj{1, 2, 3, 4, 0, 0};
    Rng rng(3);
    CHECK(pretrain_mask(traj, 1.0, rng) == traj);
    const Trajectory fully = pretrain_mask(traj, 0.0, rng);
    CHECK(fully == Trajectory{0, 0, 0, 0, 0, 0});
}

TEST_CASE("pretrain_mask keeps roughly alpha of the real tokens") {
    Trajectory traj(10000, 7);
    Rng rng(17);
    const Trajectory masked = pretrain_mask(traj, 0.5, rng);
    int kept = 0;
    for (const auto token : masked) kept += token != 0;
    CHECK(std::abs(kept / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("pretrain_mask never creates tokens and leaves padding alone") {
    Rng rng(23);
    const Trajectory traj{5, 0, 3, 2, 0, 0};
    for (int rep = 0; rep < 50; ++rep) {
        const Trajectory masked = pretrain_mask(traj, 0.5, rng);
        for (std::size_t i = 0; i < traj.size(); ++i) {
            CHECK((masked[i] == traj[i] || masked[i] == 0));
        }
    }
}

TEST_CASE("finetune_mask reproduces the worked observation example") {
    const CheckpointSet cps({1, 3}, 0.5, 4);
    const Trajectory gt{1, 2, 2, 2, 2, 3, 4, 0};
    CHECK(finetune_mask(gt, cps) == Trajectory{1, 0, 0, 0, 0, 3, 0, 0});
}

TEST_CASE("finetune_mask masks the final real step even under full observability") {
    const CheckpointSet all({1, 2, 3}, 1.0, 3);
    CHECK(finetune_mask({1, 2, 3, 0}, all) == Trajectory{1, 2, 0, 0});
    // trajectory that fills the horizon: last slot masked
    CHECK(finetune_mask({1, 2, 3}, all) == Trajectory{1, 2, 0});
}

TEST_CASE("empty checkpoint set masks everything") {
    const CheckpointSet none(std::vector<int>{}, 0.0, 4);
    CHECK(finetune_mask({1, 2, 3, 4}, none) == Trajectory{0, 0, 0, 0});
}

TEST_CASE("checkpoint_mask is an idempotent projection") {
    Rng rng(77);
    const RoadNetwork net = grid_network(4, 4);
    for (int rep = 0; rep < 30; ++rep) {
        Rng crng(static_cast<std::uint64_t>(rep));
        const CheckpointSet cps = select_checkpoints(net, 0.4, crng);
        Trajectory traj(12);
        for (auto& token : traj) {
            token = rng.uniform01() < 0.25 ? 0 : static_cast<std::int32_t>(rng.range(1, 16));
        }
        const Trajectory once = checkpoint_mask(traj, cps);
        CHECK(checkpoint_mask(once, cps) == once);
        // masking never creates tokens
        for (std::size_t i = 0; i < traj.size(); ++i) {
            CHECK((once[i] == traj[i] || once[i] == 0));
        }
    }
}

TEST_CASE("assemble_record partitions when exactly N+1 trajectories exist") {
    std::vector<Trajectory> trajs = {{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}};
    Rng rng(4);
    const auto [obs, his] = assemble_record(trajs, 4, rng);
    std::multiset<std::int32_t> used{obs[0]};
    for (const auto& h : his) used.insert(h[0]);
    CHECK(used == std::multiset<std::int32_t>{1, 2, 3, 4, 5});
}

TEST_CASE("assemble_record resamples with replacement when short") {
    const std::vector<Trajectory> single = {{9, 0}};
    Rng rng(4);
    const auto [obs, his] = assemble_record(single, 4, rng);
    CHECK(obs == Trajectory{9, 0});
    CHECK(his.size() == 4);
    for (const auto& h : his) CHECK(h == Trajectory{9, 0});

    CHECK_THROWS_AS(assemble_record({}, 2, rng), Error);
}

TEST_CASE("assemble_record picks the observation uniformly") {
    const std::vector<Trajectory> trajs = {{1, 0}, {2, 0}, {3, 0}};
    Rng rng(123);
    std::map<std::int32_t, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto [obs, his] = assemble_record(trajs, 4, rng);
        (void)his;
        counts[obs[0]]++;
    }
    for (const auto& [token, count] : counts) {
        (void)token;
        CHECK(std::abs(count / static_cast<double>(draws) - 1.0 / 3.0) < 0.02);
    }
}

TEST_CASE("one_hot_target rows and padding weights") {
    const auto target = one_hot_target({1, 0}, 2);
    CHECK(target.at(0, 0) == 0.0);
    CHECK(target.at(0, 1) == 1.0);
    CHECK(target.at(0, 2) == 0.0);
    CHECK(target.at(1, 0) == 1.0);
    CHECK(target.pad_mask == std::vector<double>{1.0, kPadLossWeight});

    // every row sums to 1
    for (int t = 0; t < target.T; ++t) {
        double sum = 0.0;
        for (int v = 0; v <= target.V; ++v) sum += target.at(t, v);
        CHECK(sum == 1.0);
    }
    CHECK_THROWS_AS(one_hot_target({5}, 2), Error);
}

TEST_CASE("checkpoint set file round-trips") {
    const CheckpointSet cps({2, 7, 11}, 0.25, 16);
    save_checkpoint_set(cps, "/tmp/tppt_test_cps.txt");
    const CheckpointSet loaded = load_checkpoint_set("/tmp/tppt_test_cps.txt", 16);
    CHECK(loaded.nodes() == cps.nodes());
    CHECK(loaded.alpha() == cps.alpha());
    CHECK(loaded.contains(7));
    CHECK_FALSE(loaded.contains(3));
    CHECK_FALSE(loaded.contains(0));
}
