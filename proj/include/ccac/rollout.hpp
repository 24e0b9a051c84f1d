#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "ccac/env.hpp"
#include "ccac/mlp.hpp"
#include "ccac/parallel.hpp"
#include "ccac/rng.hpp"

namespace ccac {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct SurrogateParams {
    double scale = 10.0;  // sigmoid sharpness applied to the constraint value
};

// Differentiable stand-in for the indicator cost: sigmoid(scale * h(s')),
// nudged off the endpoints where the exponential under- or overflows so the
// value stays strictly inside (0,1).
inline double surrogate_cost(const State& next, const SurrogateParams& sp,
                             const RewardParams& rp) {
    double c = sigmoid(sp.scale * constraint_h(next, rp));
    if (c >= 1.0) c = std::nextafter(1.0, 0.0);
    if (c <= 0.0) c = std::nextafter(0.0, 1.0);
    return c;
}

inline Vec3 surrogate_cost_state_grad(const State& next, const SurrogateParams& sp,
                                      const RewardParams& rp) {
    const double s = surrogate_cost(next, sp, rp);
    const double slope = s * (1.0 - s) * sp.scale;
    const Vec3 dh = constraint_h_state_grad();
    return {slope * dh[0], slope * dh[1], slope * dh[2]};
}

// M trajectories of N steps rolled through the model, with the noise draws
// kept so the exact same trajectories can be replayed (and differentiated)
// later. A trajectory is safe iff every state at steps 1..N satisfies
// h(s) < 0 strictly.
struct TrajectoryBatch {
    int num_traj = 0;
    int horizon = 0;
    double gap_min = 0.0;
    std::vector<double> states;   // num_traj x (horizon+1) x 3
    std::vector<double> actions;  // num_traj x horizon
    std::vector<double> rewards;  // num_traj x horizon
    std::vector<double> noises;   // num_traj x horizon
    std::vector<unsigned char> safe;

    State state(int i, int t) const {
        const double* p = &states[(static_cast<size_t>(i) * (horizon + 1) + t) * 3];
        return {p[0], p[1], p[2]};
    }
    void set_state(int i, int t, const State& s) {
        double* p = &states[(static_cast<size_t>(i) * (horizon + 1) + t) * 3];
        p[0] = s.v_ego;
        p[1] = s.v_front;
        p[2] = s.gap;
    }
    double action(int i, int t) const { return actions[static_cast<size_t>(i) * horizon + t]; }
    double reward_at(int i, int t) const { return rewards[static_cast<size_t>(i) * horizon + t]; }
    double noise(int i, int t) const { return noises[static_cast<size_t>(i) * horizon + t]; }

    void allocate(int m, int n) {
        num_traj = m;
        horizon = n;
        states.resize(static_cast<size_t>(m) * (n + 1) * 3);
        actions.resize(static_cast<size_t>(m) * n);
        rewards.resize(static_cast<size_t>(m) * n);
        noises.resize(static_cast<size_t>(m) * n);
        safe.assign(static_cast<size_t>(m), 1);
    }
};

struct SafeProbEstimate {
    double p_hat = 0.0;
    int safe_count = 0;
    int total = 0;
    double std_err = 0.0;
};

// make_sampler() -> callable(traj, t, state, rng) -> action. One sampler
// instance is created per worker chunk so samplers may hold scratch buffers.
// Per-trajectory RNG streams are derived from (seed, trajectory index); the
// batch is bit-identical for any thread count. Draw order inside one
// trajectory: initial state, then per step the sampler's own draws followed
// by the disturbance.
template <class MakeSampler>
TrajectoryBatch rollout_batch(MakeSampler&& make_sampler, const EnvParams& env, int num_traj,
                              int horizon, std::uint64_t seed, int threads = 0) {
    if (num_traj < 1 || horizon < 1)
        throw std::invalid_argument("rollout_batch: need num_traj >= 1 and horizon >= 1");
    TrajectoryBatch batch;
    batch.allocate(num_traj, horizon);
    batch.gap_min = env.rew.gap_min;

    for_chunks(num_traj, kDefaultChunk, threads, [&](int, int begin, int end) {
        auto sampler = make_sampler();
        for (int i = begin; i < end; ++i) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
            State s = sample_initial_state(rng, env.init);
            batch.set_state(i, 0, s);
            bool all_safe = true;
            for (int t = 0; t < horizon; ++t) {
                const double a = sampler(i, t, s, rng);
                const double xi = sample_disturbance(rng, env.dyn);
                const size_t k = static_cast<size_t>(i) * horizon + t;
                batch.actions[k] = a;
                batch.noises[k] = xi;
                batch.rewards[k] = reward(s, env.rew);
                s = step(s, a, xi, env.dyn);
                batch.set_state(i, t + 1, s);
                if (constraint_h(s, env.rew) >= 0.0) all_safe = false;
            }
            batch.safe[i] = all_safe ? 1 : 0;
        }
    });
    return batch;
}

// Deterministic-policy rollout: action = actor(state).
inline TrajectoryBatch rollout_policy_batch(const Mlp& actor, const ParamVector& theta,
                                            const EnvParams& env, int num_traj, int horizon,
                                            std::uint64_t seed, int threads = 0) {
    auto make_sampler = [&] {
        return [&actor, &theta, ws = actor.make_workspace()](int, int, const State& s,
                                                             Rng&) mutable {
            const Vec3 x = s.to_vec();
            double a = 0.0;
            actor.forward(theta, x.data(), &a, ws);
            return a;
        };
    };
    return rollout_batch(make_sampler, env, num_traj, horizon, seed, threads);
}

inline SafeProbEstimate estimate_safe_prob(const TrajectoryBatch& batch) {
    if (batch.num_traj < 1) throw std::invalid_argument("estimate_safe_prob: empty batch");
    int m = 0;
    for (int i = 0; i < batch.num_traj; ++i) m += batch.safe[i] ? 1 : 0;
    SafeProbEstimate est;
    est.safe_count = m;
    est.total = batch.num_traj;
    est.p_hat = static_cast<double>(m) / batch.num_traj;
    est.std_err = std::sqrt(est.p_hat * (1.0 - est.p_hat) / batch.num_traj);
    return est;
}

// Empirical cumulative indicator cost: mean over trajectories of the number
// of unsafe steps in 1..N, undiscounted. 1 - empirical_jc(b) is the Boole
// lower bound on the safe probability.
inline double empirical_jc(const TrajectoryBatch& batch) {
    if (batch.num_traj < 1) throw std::invalid_argument("empirical_jc: empty batch");
    double total = 0.0;
    for (int i = 0; i < batch.num_traj; ++i) {
        int violations = 0;
        for (int t = 1; t <= batch.horizon; ++t)
            if (batch.gap_min - batch.state(i, t).gap >= 0.0) ++violations;
        total += violations;
    }
    return total / batch.num_traj;
}

// Re-runs trajectory i from its stored initial state and noises under the
// given policy. With the rollout policy this reproduces the stored states
// bit-exactly; gradient checks call it with perturbed parameters.
template <class ActFn>
std::vector<State> replay_trajectory(const TrajectoryBatch& batch, int i, ActFn&& act,
                                     const EnvParams& env) {
    std::vector<State> states;
    states.reserve(batch.horizon + 1);
    State s = batch.state(i, 0);
    states.push_back(s);
    for (int t = 0; t < batch.horizon; ++t) {
        s = step(s, act(s), batch.noise(i, t), env.dyn);
        states.push_back(s);
    }
    return states;
}

// Columnar text dump, one row per (trajectory, step); the final row of each
// trajectory carries the terminal state only.
inline void dump_batch(const TrajectoryBatch& batch, std::ostream& os) {
    os << "traj,step,v_ego,v_front,gap,action,noise,reward,traj_safe\n";
    char buf[220];
    for (int i = 0; i < batch.num_traj; ++i) {
        for (int t = 0; t <= batch.horizon; ++t) {
            const State s = batch.state(i, t);
            if (t < batch.horizon) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                              i, t, s.v_ego, s.v_front, s.gap, batch.action(i, t),
                              batch.noise(i, t), batch.reward_at(i, t), batch.safe[i] ? 1 : 0);
            } else {
                std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,,,,%d\n", i, t, s.v_ego,
                              s.v_front, s.gap, batch.safe[i] ? 1 : 0);
            }
            os << buf;
        }
    }
}

}  // namespace ccac
