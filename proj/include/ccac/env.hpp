#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "ccac/rng.hpp"

namespace ccac {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Car-following state: ego velocity, front-car velocity (m/s) and the gap
// between the two cars (m).
struct State {
    double v_ego = 0.0;
    double v_front = 0.0;
    double gap = 0.0;

    Vec3 to_vec() const { return {v_ego, v_front, gap}; }
    static State from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }
};

struct TruncNormSpec {
    double mean = 0.0;
    double stddev = 1.0;
    double lo = -5.0;
    double hi = 5.0;
};

// Linear longitudinal dynamics s' = A s + B a + D xi for time step dt:
//   v_ego'   = v_ego + dt * a
//   v_front' = v_front
//   gap'     = gap + dt * (v_front - v_ego) + dt * xi
// The disturbance enters the gap equation only.
struct DynamicsParams {
    double dt = 0.1;
    TruncNormSpec noise;
    double accel_lo = -4.0;
    double accel_hi = 3.0;

    Mat3 state_matrix() const {
        return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {-dt, dt, 1.0}}};
    }
    Vec3 input_vector() const { return {dt, 0.0, 0.0}; }
    Vec3 noise_vector() const { return {0.0, 0.0, dt}; }
};

struct RewardParams {
    double velocity_weight = 0.2;
    double gap_weight = 0.05;
    double discount = 0.98;
    double gap_min = 2.0;  // m; the state is safe while gap > gap_min
};

// Per-component uniform ranges for initial-state sampling. Training uses a
// neighborhood of the nominal evaluation point (5, 6, 6); degenerate ranges
// give a point mass.
struct InitSpec {
    double v_ego_lo = 3.0, v_ego_hi = 7.0;
    double v_front_lo = 5.0, v_front_hi = 7.0;
    double gap_lo = 3.0, gap_hi = 9.0;
};

inline State step(const State& s, double accel, double xi, const DynamicsParams& p) {
    if (!(accel >= p.accel_lo && accel <= p.accel_hi))
        throw std::domain_error("step: action outside acceleration bounds");
    const double nlo = p.noise.mean + p.noise.stddev * p.noise.lo;
    const double nhi = p.noise.mean + p.noise.stddev * p.noise.hi;
    if (!(xi >= nlo && xi <= nhi))
        throw std::domain_error("step: disturbance outside noise support");
    return {s.v_ego + p.dt * accel, s.v_front,
            s.gap + p.dt * (s.v_front - s.v_ego) + p.dt * xi};
}

inline double reward(const State& s, const RewardParams& rp) {
    return rp.velocity_weight * s.v_ego - rp.gap_weight * s.gap;
}

inline Vec3 reward_state_grad(const RewardParams& rp) {
    return {rp.velocity_weight, 0.0, -rp.gap_weight};
}

// h(s) < 0 defines the safe region, so h is the signed gap deficit.
inline double constraint_h(const State& s, const RewardParams& rp) {
    return rp.gap_min - s.gap;
}

inline Vec3 constraint_h_state_grad() { return {0.0, 0.0, -1.0}; }

// Rejection sampling from the truncated normal; at a +-5 sigma support the
// acceptance probability is essentially 1.
inline double sample_trunc_normal(Rng& rng, const TruncNormSpec& spec) {
    for (;;) {
        const double z = rng.normal();
        if (z > spec.lo && z < spec.hi) return spec.mean + spec.stddev * z;
    }
}

inline double sample_disturbance(Rng& rng, const DynamicsParams& p) {
    return sample_trunc_normal(rng, p.noise);
}

// For the linear system the Jacobians are the constant matrices A and B.
inline void dynamics_jacobians(const DynamicsParams& p, Mat3& dfds, Vec3& dfda) {
    dfds = p.state_matrix();
    dfda = p.input_vector();
}

inline State sample_initial_state(Rng& rng, const InitSpec& init) {
    auto draw = [&](double lo, double hi) {
        if (lo > hi) throw std::invalid_argument("sample_initial_state: empty range");
        return lo == hi ? lo : rng.uniform(lo, hi);
    };
    State s;
    s.v_ego = draw(init.v_ego_lo, init.v_ego_hi);
    s.v_front = draw(init.v_front_lo, init.v_front_hi);
    s.gap = draw(init.gap_lo, init.gap_hi);
    return s;
}

// Full environment parameter bundle as loaded from the experiment config.
struct EnvParams {
    DynamicsParams dyn;
    RewardParams rew;
    InitSpec init;
};

}  // namespace ccac
