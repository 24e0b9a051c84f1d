#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ccac/mlp.hpp"
#include "ccac/rollout.hpp"

using namespace ccac;

namespace {

EnvParams default_env() { return EnvParams{}; }

Mlp default_actor() {
    return Mlp(make_mlp_spec(3, {8, 8}, 1, Activation::kLinear, SquashRange{-4.0, 3.0}));
}

}  // namespace

TEST_CASE("single hand-computed rollout step") {
    EnvParams env = default_env();
    env.dyn.noise.stddev = 0.0;  // zero-noise stub
    env.init = {5, 5, 6, 6, 6, 6};
    auto make_zero = [] { return [](int, int, const State&, Rng&) { return 0.0; }; };
    const TrajectoryBatch b = rollout_batch(make_zero, env, 1, 1, 99);
    const State s1 = b.state(0, 1);
    REQUIRE(s1.v_ego == 5.0);
    REQUIRE(s1.v_front == 6.0);
    REQUIRE(s1.gap == Catch::Approx(6.1).margin(1e-12));
    REQUIRE(b.reward_at(0, 0) == Catch::Approx(0.7).margin(1e-12));
    REQUIRE(b.noise(0, 0) == 0.0);
}

TEST_CASE("stored noises replay to the stored states bit-exactly") {
    EnvParams env = default_env();
    Mlp actor = default_actor();
    const ParamVector theta = actor.init_params(7);
    const TrajectoryBatch b = rollout_policy_batch(actor, theta, env, 16, 20, 1234);
    MlpWorkspace ws = actor.make_workspace();
    for (int i = 0; i < b.num_traj; ++i) {
        auto act = [&](const State& s) {
            const Vec3 x = s.to_vec();
            double a = 0.0;
            actor.forward(theta, x.data(), &a, ws);
            return a;
        };
        const auto states = replay_trajectory(b, i, act, env);
        for (int t = 0; t <= b.horizon; ++t) {
            const State expect = b.state(i, t);
            REQUIRE(states[t].v_ego == expect.v_ego);
            REQUIRE(states[t].v_front == expect.v_front);
            REQUIRE(states[t].gap == expect.gap);
        }
    }
}

TEST_CASE("batches are identical for any thread count and any rerun") {
    EnvParams env = default_env();
    Mlp actor = default_actor();
    const ParamVector theta = actor.init_params(8);
    const TrajectoryBatch b1 = rollout_policy_batch(actor, theta, env, 64, 12, 555, 1);
    const TrajectoryBatch b4 = rollout_policy_batch(actor, theta, env, 64, 12, 555, 4);
    REQUIRE(b1.states == b4.states);
    REQUIRE(b1.actions == b4.actions);
    REQUIRE(b1.noises == b4.noises);
    REQUIRE(b1.safe == b4.safe);
    const TrajectoryBatch b1b = rollout_policy_batch(actor, theta, env, 64, 12, 555, 1);
    REQUIRE(b1.states == b1b.states);
}

TEST_CASE("paper-scale batch completes") {
    EnvParams env = default_env();
    Mlp actor = default_actor();
    const ParamVector theta = actor.init_params(9);
    const TrajectoryBatch b = rollout_policy_batch(actor, theta, env, 8192, 80, 4242);
    REQUIRE(b.num_traj == 8192);
    REQUIRE(b.horizon == 80);
    REQUIRE(b.states.size() == 8192u * 81u * 3u);
}

TEST_CASE("safe-probability estimator") {
    SECTION("all-safe batch") {
        EnvParams env = default_env();
        env.init = {5, 5, 6, 6, 40, 40};  // huge gap, nothing can go wrong in 5 steps
        auto make_zero = [] { return [](int, int, const State&, Rng&) { return 0.0; }; };
        const TrajectoryBatch b = rollout_batch(make_zero, env, 32, 5, 66);
        const SafeProbEstimate est = estimate_safe_prob(b);
        REQUIRE(est.p_hat == 1.0);
        REQUIRE(est.safe_count == 32);
        REQUIRE(est.std_err == 0.0);
    }
    SECTION("counting arithmetic") {
        TrajectoryBatch b;
        b.allocate(8192, 1);
        b.gap_min = 2.0;
        for (int i = 0; i < 8192; ++i) b.safe[i] = i < 7373 ? 1 : 0;
        const SafeProbEstimate est = estimate_safe_prob(b);
        REQUIRE(est.p_hat == Catch::Approx(7373.0 / 8192.0).margin(1e-15));
        REQUIRE(est.std_err ==
                Catch::Approx(std::sqrt(est.p_hat * (1 - est.p_hat) / 8192)).margin(1e-15));
    }
    SECTION("one unsafe step marks the whole trajectory") {
        TrajectoryBatch b;
        b.allocate(1, 4);
        b.gap_min = 2.0;
        for (int t = 0; t <= 4; ++t) b.set_state(0, t, {5, 6, t == 3 ? 1.9 : 6.0});
        // recompute the flag the way the rollout defines it
        bool all_safe = true;
        for (int t = 1; t <= 4; ++t)
            if (b.gap_min - b.state(0, t).gap >= 0.0) all_safe = false;
        b.safe[0] = all_safe;
        REQUIRE(estimate_safe_prob(b).p_hat == 0.0);
        REQUIRE(empirical_jc(b) == 1.0);
    }
    SECTION("empty batch is rejected") {
        TrajectoryBatch b;
        REQUIRE_THROWS_AS(estimate_safe_prob(b), std::invalid_argument);
    }
}

TEST_CASE("empirical cumulative cost") {
    SECTION("hand cases") {
        TrajectoryBatch b;
        b.allocate(1, 6);
        b.gap_min = 2.0;
        const double gaps[7] = {6.0, 1.0, 1.5, 6.0, 2.0, 6.0, 6.0};  // 3 unsafe among steps 1..6
        for (int t = 0; t <= 6; ++t) b.set_state(0, t, {5, 6, gaps[t]});
        b.safe[0] = 0;
        REQUIRE(empirical_jc(b) == 3.0);
    }
    SECTION("boole chain over random policies and batches") {
        EnvParams env = default_env();
        Mlp actor = default_actor();
        Rng seeds(404);
        for (int trial = 0; trial < 100; ++trial) {
            ParamVector theta = actor.init_params(seeds.raw());
            // widen the init range so some batches are unsafe from the start
            env.init.gap_lo = 1.0;
            env.init.gap_hi = 8.0;
            const TrajectoryBatch b =
                rollout_policy_batch(actor, theta, env, 32, 10, seeds.raw());
            const double p_hat = estimate_safe_prob(b).p_hat;
            const double jc = empirical_jc(b);
            REQUIRE(1.0 - jc <= p_hat + 1e-12);
            REQUIRE(p_hat <= 1.0);
        }
    }
}

TEST_CASE("sigmoid surrogate cost") {
    SurrogateParams sp;
    RewardParams rp;
    REQUIRE(surrogate_cost({0, 0, 2.0}, sp, rp) == 0.5);
    REQUIRE(surrogate_cost({0, 0, 6.0}, sp, rp) == Catch::Approx(4.248e-18).epsilon(0.01));
    REQUIRE(surrogate_cost({0, 0, 1.0}, sp, rp) == Catch::Approx(0.9999546).epsilon(1e-4));
    // monotone increasing in h (decreasing in the gap), bounded in (0,1)
    double prev = 1.0;
    for (double gap = -50.0; gap <= 50.0; gap += 0.5) {
        const double c = surrogate_cost({0, 0, gap}, sp, rp);
        REQUIRE(c > 0.0);
        REQUIRE(c < 1.0);
        REQUIRE(c <= prev);
        prev = c;
    }
}

TEST_CASE("estimates concentrate for a fixed policy") {
    EnvParams env = default_env();
    env.init.gap_lo = 2.2;  // start near the boundary so safety is nontrivial
    env.init.gap_hi = 7.0;
    auto make_cruise = [] {
        return [](int, int, const State& s, Rng&) {
            return std::clamp(0.8 * (s.v_front - s.v_ego), -4.0, 3.0);
        };
    };
    const int m = 10'000;
    int fails = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const SafeProbEstimate e1 =
            estimate_safe_prob(rollout_batch(make_cruise, env, m, 20, 1000 + trial));
        const SafeProbEstimate e2 =
            estimate_safe_prob(rollout_batch(make_cruise, env, m, 20, 2000 + trial));
        REQUIRE(e1.p_hat > 0.0);
        REQUIRE(e1.p_hat < 1.0);
        const double se = std::max(e1.std_err, e2.std_err);
        if (std::fabs(e1.p_hat - e2.p_hat) >= 5.0 * se) ++fails;
    }
    REQUIRE(fails == 0);
}

TEST_CASE("batch dump is columnar") {
    EnvParams env = default_env();
    Mlp actor = default_actor();
    const ParamVector theta = actor.init_params(10);
    const TrajectoryBatch b = rollout_policy_batch(actor, theta, env, 3, 4, 77);
    std::stringstream ss;
    dump_batch(b, ss);
    std::string line;
    REQUIRE(std::getline(ss, line));
    REQUIRE(line == "traj,step,v_ego,v_front,gap,action,noise,reward,traj_safe");
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    REQUIRE(rows == 3 * (4 + 1));
}

TEST_CASE("rollout input validation") {
    EnvParams env = default_env();
    auto make_zero = [] { return [](int, int, const State&, Rng&) { return 0.0; }; };
    REQUIRE_THROWS_AS(rollout_batch(make_zero, env, 0, 5, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(rollout_batch(make_zero, env, 5, 0, 1), std::invalid_argument);
}
