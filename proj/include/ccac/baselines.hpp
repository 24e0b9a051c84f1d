#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ccac/ccac.hpp"
#include "ccac/env.hpp"
#include "ccac/mlp.hpp"
#include "ccac/parallel.hpp"
#include "ccac/rng.hpp"
#include "ccac/rollout.hpp"

namespace ccac {

// --- fixed-weight penalty (FWP) ---------------------------------------------

struct FwpConfig {
    double weight = 20.0;

    void validate() const {
        if (!(weight >= 0.0)) throw std::invalid_argument("FwpConfig: weight must be >= 0");
    }
};

// The penalty branch with the switching and schedule removed: always
// grad_Jr - weight * grad_Jc.
inline ParamVector fwp_gradient(const BpttGrads& g, const FwpConfig& cfg) {
    cfg.validate();
    return penalized_direction(g.grad_jr, g.grad_jc, cfg.weight);
}

// --- model-free primal-dual (MF-PD) ------------------------------------------

// Squashed diagonal-Gaussian policy: z ~ N(mean(s), sigma) in pre-squash
// space, action = affine-tanh(z). The likelihood-ratio gradient is taken on
// the z density, so the squash needs no correction term.
inline double squash_action(double z, double lo, double hi) {
    double a = lo + 0.5 * (hi - lo) * (std::tanh(z) + 1.0);
    if (a >= hi) a = std::nextafter(hi, lo);
    if (a <= lo) a = std::nextafter(lo, hi);
    return a;
}

struct MfpdConfig {
    int num_trajectories = 8192;
    int horizon = 80;
    double discount = 0.98;
    double policy_lr = 1e-4;
    double log_std_lr = 1e-4;
    double critic_lr = 2e-4;
    double dual_lr = 0.01;
    double risk_level = 0.1;  // constrains J_c <= risk_level
    double sigma_init = 0.3;
    double std_min = 0.01, std_max = 2.0;
    int max_iters = 1500;
    int threads = 0;

    void validate() const {
        if (num_trajectories < 1 || horizon < 1)
            throw std::invalid_argument("MfpdConfig: batch sizes must be >= 1");
        if (!(risk_level > 0.0 && risk_level < 1.0))
            throw std::invalid_argument("MfpdConfig: risk_level must lie in (0,1)");
        if (!(sigma_init >= std_min && sigma_init <= std_max) || !(std_min > 0.0))
            throw std::invalid_argument("MfpdConfig: exploration std settings invalid");
        if (!(dual_lr >= 0.0)) throw std::invalid_argument("MfpdConfig: dual_lr must be >= 0");
    }
};

struct MfpdState {
    ParamVector mean_params;  // pre-squash mean head
    double log_std = 0.0;
    ParamVector reward_critic_params;
    ParamVector cost_critic_params;
    double lambda = 0.0;  // dual variable, kept >= 0 by projection
    int k = 0;
    std::uint64_t run_seed = 0;
    IterMetrics last_metrics;
    double last_lambda = 0.0;
};

struct MfpdContext {
    const Mlp* mean_net = nullptr;       // 3 -> 1, linear output (pre-squash)
    const Mlp* reward_critic = nullptr;  // 4 -> 1
    const Mlp* cost_critic = nullptr;    // 4 -> 1
    EnvParams env;
    MfpdConfig cfg;
};

// One primal-dual pass: sample with the Gaussian policy (model as a black
// box, no model gradients), fit both critics to N-step targets, ascend the
// Lagrangian J_r - lambda (J_c - delta) by the likelihood-ratio gradient
// with per-step batch-mean baselines, then dual-ascend lambda.
inline MfpdState mfpd_iteration(const MfpdState& in, const MfpdContext& ctx) {
    const MfpdConfig& cfg = ctx.cfg;
    cfg.validate();
    const Mlp& mean_net = *ctx.mean_net;
    const Mlp& rcritic = *ctx.reward_critic;
    const Mlp& ccritic = *ctx.cost_critic;
    const EnvParams& env = ctx.env;
    const int M = cfg.num_trajectories, N = cfg.horizon;
    MfpdState out = in;

    const double sigma = std::exp(in.log_std);
    std::vector<double> zetas(static_cast<size_t>(M) * N);

    const std::uint64_t iter_seed = derive_seed(in.run_seed, static_cast<std::uint64_t>(in.k), 2);
    auto make_sampler = [&] {
        return [&, ws = mean_net.make_workspace()](int i, int t, const State& s,
                                                   Rng& rng) mutable {
            const Vec3 x = s.to_vec();
            double zbar = 0.0;
            mean_net.forward(in.mean_params, x.data(), &zbar, ws);
            const double zeta = rng.normal();
            zetas[static_cast<size_t>(i) * N + t] = zeta;
            return squash_action(zbar + sigma * zeta, env.dyn.accel_lo, env.dyn.accel_hi);
        };
    };
    const TrajectoryBatch batch = rollout_batch(make_sampler, env, M, N, iter_seed, cfg.threads);

    const SafeProbEstimate ps = estimate_safe_prob(batch);
    const double jc_hat = empirical_jc(batch);

    // critic updates (N-step targets; the cost return is horizon-limited, so
    // the cost target carries no bootstrap tail)
    TrainerConfig view;
    view.num_trajectories = M;
    view.horizon = N;
    view.discount = cfg.discount;
    view.threads = cfg.threads;
    auto make_mean_tail = [&] {
        return [&, ws = mean_net.make_workspace()](const State& s) mutable {
            const Vec3 x = s.to_vec();
            double zbar = 0.0;
            mean_net.forward(in.mean_params, x.data(), &zbar, ws);
            return squash_action(zbar, env.dyn.accel_lo, env.dyn.accel_hi);
        };
    };
    const auto targets_r = n_step_target_generic(batch, rcritic, in.reward_critic_params,
                                                 make_mean_tail, view);
    std::vector<double> targets_c(static_cast<size_t>(M));
    for (int i = 0; i < M; ++i) {
        int violations = 0;
        for (int t = 1; t <= N; ++t)
            if (constraint_h(batch.state(i, t), env.rew) >= 0.0) ++violations;
        targets_c[i] = violations;
    }
    const ParamVector rgit =
        critic_semi_gradient(batch, targets_r, rcritic, in.reward_critic_params, cfg.threads);
    const ParamVector cgit =
        critic_semi_gradient(batch, targets_c, ccritic, in.cost_critic_params, cfg.threads);
    for (size_t j = 0; j < out.reward_critic_params.size(); ++j)
        out.reward_critic_params[j] -= cfg.critic_lr * rgit[j];
    for (size_t j = 0; j < out.cost_critic_params.size(); ++j)
        out.cost_critic_params[j] -= cfg.critic_lr * cgit[j];
    detail::check_finite(out.reward_critic_params, in.k, "reward critic parameters");
    detail::check_finite(out.cost_critic_params, in.k, "cost critic parameters");

    // per-step returns-to-go; the reward return bootstraps the updated
    // reward critic at s_N under the mean action
    const auto gpow = discount_powers(cfg.discount, N);
    std::vector<double> ret_togo(static_cast<size_t>(M) * (N + 1));
    std::vector<double> cost_togo(static_cast<size_t>(M) * (N + 1));
    for_chunks(M, kDefaultChunk, cfg.threads, [&](int, int begin, int end) {
        MlpWorkspace mws = mean_net.make_workspace();
        MlpWorkspace cws = rcritic.make_workspace();
        for (int i = begin; i < end; ++i) {
            const State sN = batch.state(i, N);
            const Vec3 sv = sN.to_vec();
            double zbar = 0.0;
            mean_net.forward(in.mean_params, sv.data(), &zbar, mws);
            const double aN = squash_action(zbar, env.dyn.accel_lo, env.dyn.accel_hi);
            const double x[4] = {sN.v_ego, sN.v_front, sN.gap, aN};
            double qtail = 0.0;
            rcritic.forward(out.reward_critic_params, x, &qtail, cws);
            double* R = &ret_togo[static_cast<size_t>(i) * (N + 1)];
            double* C = &cost_togo[static_cast<size_t>(i) * (N + 1)];
            R[N] = qtail;
            C[N] = 0.0;
            for (int t = N - 1; t >= 0; --t) {
                R[t] = batch.reward_at(i, t) + cfg.discount * R[t + 1];
                const double c =
                    constraint_h(batch.state(i, t + 1), env.rew) >= 0.0 ? 1.0 : 0.0;
                C[t] = c + C[t + 1];
            }
        }
    });

    // per-step batch-mean baseline on the combined objective
    std::vector<double> baseline(static_cast<size_t>(N), 0.0);
    for (int i = 0; i < M; ++i)
        for (int t = 0; t < N; ++t)
            baseline[t] += gpow[t] * ret_togo[static_cast<size_t>(i) * (N + 1) + t] -
                           in.lambda * cost_togo[static_cast<size_t>(i) * (N + 1) + t];
    for (double& b : baseline) b /= M;

    // likelihood-ratio gradient on the z density: d log N(z; zbar, sigma)
    // / d zbar = zeta / sigma, / d log_std = zeta^2 - 1
    const int num_chunks = (M + kDefaultChunk - 1) / kDefaultChunk;
    std::vector<ParamVector> part_theta(static_cast<size_t>(num_chunks));
    std::vector<double> part_logstd(static_cast<size_t>(num_chunks), 0.0);
    for_chunks(M, kDefaultChunk, cfg.threads, [&](int c, int begin, int end) {
        MlpWorkspace mws = mean_net.make_workspace();
        GradResult gr;
        ParamVector acc(static_cast<size_t>(mean_net.param_count()), 0.0);
        double acc_logstd = 0.0;
        for (int i = begin; i < end; ++i) {
            for (int t = 0; t < N; ++t) {
                const double adv =
                    gpow[t] * ret_togo[static_cast<size_t>(i) * (N + 1) + t] -
                    in.lambda * cost_togo[static_cast<size_t>(i) * (N + 1) + t] - baseline[t];
                const double zeta = zetas[static_cast<size_t>(i) * N + t];
                const double upstream = adv * zeta / sigma;
                const State st = batch.state(i, t);
                const Vec3 x = st.to_vec();
                mean_net.backward(in.mean_params, x.data(), &upstream, gr, mws);
                detail::axpy(acc, 1.0, gr.d_params);
                acc_logstd += adv * (zeta * zeta - 1.0);
            }
        }
        part_theta[c] = std::move(acc);
        part_logstd[c] = acc_logstd;
    });
    ParamVector pol_grad(static_cast<size_t>(mean_net.param_count()), 0.0);
    double logstd_grad = 0.0;
    for (int c = 0; c < num_chunks; ++c) {
        detail::axpy(pol_grad, 1.0, part_theta[c]);
        logstd_grad += part_logstd[c];
    }
    const double inv = 1.0 / M;
    for (size_t j = 0; j < out.mean_params.size(); ++j)
        out.mean_params[j] += cfg.policy_lr * pol_grad[j] * inv;
    out.log_std += cfg.log_std_lr * logstd_grad * inv;
    out.log_std = std::clamp(out.log_std, std::log(cfg.std_min), std::log(cfg.std_max));
    detail::check_finite(out.mean_params, in.k, "policy parameters");

    // dual ascent on J_c <= delta
    out.lambda = std::max(0.0, in.lambda + cfg.dual_lr * (jc_hat - cfg.risk_level));

    double ret = 0.0;
    for (double t : targets_r) ret += t;
    ret /= M;
    out.k = in.k + 1;
    out.last_metrics = {in.k, ps.p_hat, jc_hat, ret, 0.0, 0.0, cfg.policy_lr, cfg.critic_lr};
    out.last_lambda = out.lambda;
    return out;
}

// --- safety shielding ---------------------------------------------------------

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

inline double trunc_normal_cdf(double x, const TruncNormSpec& spec) {
    const double lo = spec.mean + spec.stddev * spec.lo;
    const double hi = spec.mean + spec.stddev * spec.hi;
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double zlo = std_normal_cdf(spec.lo), zhi = std_normal_cdf(spec.hi);
    const double u = std_normal_cdf((x - spec.mean) / spec.stddev);
    return (u - zlo) / (zhi - zlo);
}

inline double trunc_normal_pdf(double x, const TruncNormSpec& spec) {
    const double lo = spec.mean + spec.stddev * spec.lo;
    const double hi = spec.mean + spec.stddev * spec.hi;
    if (x < lo || x > hi) return 0.0;
    const double zlo = std_normal_cdf(spec.lo), zhi = std_normal_cdf(spec.hi);
    const double z = (x - spec.mean) / spec.stddev;
    const double phi = 0.39894228040143267794 * std::exp(-0.5 * z * z);
    return phi / (spec.stddev * (zhi - zlo));
}

// Distribution of the sum of two consecutive disturbances, tabulated once by
// discrete self-convolution of the truncated-normal density on a fixed grid
// (default step 1e-3 over the doubled support).
class NoiseSumDist {
public:
    explicit NoiseSumDist(const TruncNormSpec& spec, double grid_step = 1e-3) {
        const double a = spec.mean + spec.stddev * spec.lo;
        const double b = spec.mean + spec.stddev * spec.hi;
        if (!(b > a)) throw std::invalid_argument("NoiseSumDist: noise support is empty");
        step_ = grid_step;
        const int n = static_cast<int>(std::ceil((b - a) / grid_step));
        std::vector<double> f(static_cast<size_t>(n) + 1);
        for (int j = 0; j <= n; ++j) f[j] = trunc_normal_pdf(a + j * step_, spec);

        z0_ = 2.0 * a;
        std::vector<double> fz(2 * static_cast<size_t>(n) + 1, 0.0);
        for (int k = 0; k <= 2 * n; ++k) {
            const int jlo = std::max(0, k - n), jhi = std::min(n, k);
            double s = 0.0;
            for (int j = jlo; j <= jhi; ++j) s += f[j] * f[k - j];
            fz[k] = s * step_;
        }
        cdf_.resize(fz.size());
        cdf_[0] = 0.0;
        for (size_t k = 1; k < fz.size(); ++k)
            cdf_[k] = cdf_[k - 1] + 0.5 * step_ * (fz[k - 1] + fz[k]);
        const double total = cdf_.back();
        for (double& c : cdf_) c /= total;
    }

    double cdf(double z) const {
        const double pos = (z - z0_) / step_;
        if (pos <= 0.0) return 0.0;
        if (pos >= static_cast<double>(cdf_.size() - 1)) return 1.0;
        const size_t k = static_cast<size_t>(pos);
        const double frac = pos - static_cast<double>(k);
        return cdf_[k] + frac * (cdf_[k + 1] - cdf_[k]);
    }

    double quantile(double p) const {
        if (p <= 0.0) return z0_;
        if (p >= 1.0) return z0_ + step_ * static_cast<double>(cdf_.size() - 1);
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
        const size_t k = static_cast<size_t>(it - cdf_.begin());
        if (k == 0) return z0_;
        const double c0 = cdf_[k - 1], c1 = cdf_[k];
        const double frac = (c1 > c0) ? (p - c0) / (c1 - c0) : 0.0;
        return z0_ + step_ * (static_cast<double>(k - 1) + frac);
    }

private:
    double z0_ = 0.0;
    double step_ = 0.0;
    std::vector<double> cdf_;
};

struct ShieldConfig {
    double risk_level = 0.1;  // total risk budget over the horizon
    int horizon = 80;         // uniform allocation: risk_level/horizon per step

    void validate() const {
        if (!(risk_level > 0.0 && risk_level < 1.0))
            throw std::invalid_argument("ShieldConfig: risk_level must lie in (0,1)");
        if (horizon < 1) throw std::invalid_argument("ShieldConfig: horizon must be >= 1");
    }
};

// The action first touches the gap two steps ahead:
//   gap_{t+2} = gap + 2 dt (v_front - v_ego) - dt^2 a + dt (xi_t + xi_{t+1}),
// so Pr{gap_{t+2} <= gap_min} <= risk/horizon is the linear bound
//   a <= (gap - gap_min + 2 dt (v_front - v_ego) + dt q_low) / dt^2
// with q_low the (risk/horizon)-quantile of the summed disturbance.
inline double shield_threshold(const State& s, const ShieldConfig& cfg,
                               const DynamicsParams& dyn, double gap_min,
                               const NoiseSumDist& dist) {
    const double per_step = cfg.risk_level / cfg.horizon;
    const double q_low = dist.quantile(per_step);
    const double dt = dyn.dt;
    return (s.gap - gap_min + 2.0 * dt * (s.v_front - s.v_ego) + dt * q_low) / (dt * dt);
}

// Closest action to a_raw within bounds that keeps the two-step-ahead gap
// constraint at per-step risk; falls back to maximal braking when no bounded
// action is feasible.
inline double shield_project(const State& s, double a_raw, const ShieldConfig& cfg,
                             const DynamicsParams& dyn, double gap_min,
                             const NoiseSumDist& dist) {
    const double a_max = shield_threshold(s, cfg, dyn, gap_min, dist);
    if (a_raw <= a_max) return a_raw;
    if (a_max >= dyn.accel_lo) return a_max;
    return dyn.accel_lo;
}

namespace detail {

// two-step violation probability of action a, by fresh quadrature over the
// first disturbance with the closed-form truncated-normal cdf inside
inline double shield_violation_prob_quad(const State& s, double a, const DynamicsParams& dyn,
                                         double gap_min, int quad_points) {
    const double dt = dyn.dt;
    const double mean_gap = s.gap + 2.0 * dt * (s.v_front - s.v_ego) - dt * dt * a;
    const double z_req = (gap_min - mean_gap) / dt;  // violation iff xi+xi' <= z_req
    const TruncNormSpec& spec = dyn.noise;
    const double lo = spec.mean + spec.stddev * spec.lo;
    const double hi = spec.mean + spec.stddev * spec.hi;
    const double h = (hi - lo) / quad_points;
    // composite Simpson over the first disturbance
    double sum = trunc_normal_pdf(lo, spec) * trunc_normal_cdf(z_req - lo, spec) +
                 trunc_normal_pdf(hi, spec) * trunc_normal_cdf(z_req - hi, spec);
    for (int j = 1; j < quad_points; ++j) {
        const double x = lo + j * h;
        const double w = (j % 2 == 1) ? 4.0 : 2.0;
        sum += w * trunc_normal_pdf(x, spec) * trunc_normal_cdf(z_req - x, spec);
    }
    return std::clamp(sum * h / 3.0, 0.0, 1.0);
}

}  // namespace detail

// The same projection computed the way an online shield solves it: bisection
// on the risk boundary with the violation probability integrated numerically
// at every probe, no precomputed table. Behaviorally identical to
// shield_project up to the bisection tolerance; this is the code path the
// one-step latency benchmark measures.
inline double shield_project_solve(const State& s, double a_raw, const ShieldConfig& cfg,
                                   const DynamicsParams& dyn, double gap_min,
                                   int quad_points = 2048, double tol = 1e-9) {
    const double per_step = cfg.risk_level / cfg.horizon;
    auto risk = [&](double a) {
        return detail::shield_violation_prob_quad(s, a, dyn, gap_min, quad_points);
    };
    if (risk(a_raw) <= per_step) return a_raw;
    if (risk(dyn.accel_lo) > per_step) return dyn.accel_lo;
    double lo = dyn.accel_lo, hi = a_raw;  // risk(lo) <= per_step < risk(hi)
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (risk(mid) <= per_step)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace ccac
