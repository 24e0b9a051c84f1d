#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccac/env.hpp"
#include "ccac/mlp.hpp"
#include "ccac/parallel.hpp"
#include "ccac/rng.hpp"
#include "ccac/rollout.hpp"

namespace ccac {

struct TrainerConfig {
    int num_trajectories = 8192;
    int horizon = 80;
    double discount = 0.98;
    double actor_lr_init = 36e-5;
    double actor_lr_final = 2e-5;
    double critic_lr = 2e-4;
    SurrogateParams surrogate;        // sigmoid scale 10
    double risk_level = 0.1;          // constraint threshold is 1 - risk_level
    double penalty_init = 1000.0;     // b_0
    double penalty_growth = 1.01;     // per-iteration factor
    double penalty_cap = 10000.0;
    double penalty_weight_max = 10.0; // cap on the switched coefficient
    bool penalty_normalize = true;    // scale the cost term by |gJr|/|gJc|
    double convergence_tol = 1e-4;    // zeta, on probe outputs
    int max_iters = 1500;
    int convergence_probes = 256;
    std::uint64_t probe_seed = 0x5eed50f7ULL;  // fixed; independent of run seed
    bool use_adam = false;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    int threads = 0;

    void validate() const {
        if (num_trajectories < 1 || horizon < 1)
            throw std::invalid_argument("TrainerConfig: batch sizes must be >= 1");
        if (!(discount > 0.0 && discount < 1.0))
            throw std::invalid_argument("TrainerConfig: discount must lie in (0,1)");
        if (!(risk_level > 0.0 && risk_level < 1.0))
            throw std::invalid_argument("TrainerConfig: risk_level must lie in (0,1)");
        if (!(penalty_init > 0.0) || !(penalty_growth >= 1.0))
            throw std::invalid_argument("TrainerConfig: penalty schedule invalid");
        if (!(actor_lr_init >= 0.0) || !(actor_lr_final >= 0.0) || !(critic_lr >= 0.0))
            throw std::invalid_argument("TrainerConfig: learning rates must be >= 0");
        if (!(convergence_tol > 0.0))
            throw std::invalid_argument("TrainerConfig: convergence_tol must be > 0");
        if (max_iters < 0) throw std::invalid_argument("TrainerConfig: max_iters must be >= 0");
    }

    // linear decay across the configured iteration budget
    double actor_lr(int k) const {
        if (max_iters <= 1) return actor_lr_init;
        const double frac = std::min(1.0, static_cast<double>(k) / (max_iters - 1));
        return actor_lr_init + frac * (actor_lr_final - actor_lr_init);
    }
};

struct IterMetrics {
    int k = 0;
    double p_hat = 0.0;
    double jc = 0.0;
    double return_estimate = 0.0;
    double penalty_factor = 0.0;
    double penalty_coef = 0.0;  // multiplier actually applied to grad_Jc
    double actor_lr = 0.0;
    double critic_lr = 0.0;
};

struct TrainerState {
    ParamVector actor_params;
    ParamVector critic_params;
    int k = 0;
    std::uint64_t run_seed = 0;
    IterMetrics last_metrics;
    // Adam moments, used only when TrainerConfig::use_adam is set
    ParamVector adam_m_actor, adam_v_actor, adam_m_critic, adam_v_critic;
};

struct BpttGrads {
    ParamVector grad_jr;
    ParamVector grad_jc;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int iter, const std::string& what)
        : std::runtime_error("training diverged at iteration " + std::to_string(iter) + ": " +
                             what),
          iteration(iter) {}
    int iteration;
};

inline double penalty_factor(int k, const TrainerConfig& cfg) {
    if (k < 0) throw std::invalid_argument("penalty_factor: k must be >= 0");
    return std::min(cfg.penalty_init * std::pow(cfg.penalty_growth, k), cfg.penalty_cap);
}

inline std::vector<double> discount_powers(double gamma, int horizon) {
    std::vector<double> p(static_cast<size_t>(horizon) + 1);
    p[0] = 1.0;
    for (int t = 1; t <= horizon; ++t) p[t] = p[t - 1] * gamma;
    return p;
}

// --- critic ----------------------------------------------------------------

// Per-trajectory N-step bootstrapped target
//   sum_t gamma^t r_t + gamma^N Q(s_N, tail_action(s_N); w),
// treated as a constant by the critic update. make_tail() builds one tail
// policy per worker chunk; the tail action is the current deterministic
// policy (or the Gaussian mean for the model-free baseline).
template <class MakeTail>
std::vector<double> n_step_target_generic(const TrajectoryBatch& batch, const Mlp& critic,
                                          const ParamVector& w, MakeTail&& make_tail,
                                          const TrainerConfig& cfg) {
    if (batch.horizon != cfg.horizon)
        throw std::invalid_argument("n_step_target: batch horizon does not match config");
    const auto gpow = discount_powers(cfg.discount, batch.horizon);
    std::vector<double> targets(static_cast<size_t>(batch.num_traj));
    for_chunks(batch.num_traj, kDefaultChunk, cfg.threads, [&](int, int begin, int end) {
        MlpWorkspace cws = critic.make_workspace();
        auto tail = make_tail();
        for (int i = begin; i < end; ++i) {
            double sum = 0.0;
            for (int t = 0; t < batch.horizon; ++t) sum += gpow[t] * batch.reward_at(i, t);
            const State sN = batch.state(i, batch.horizon);
            const double aN = tail(sN);
            const double x[4] = {sN.v_ego, sN.v_front, sN.gap, aN};
            double q = 0.0;
            critic.forward(w, x, &q, cws);
            targets[i] = sum + gpow[batch.horizon] * q;
        }
    });
    return targets;
}

inline std::vector<double> n_step_target(const TrajectoryBatch& batch, const Mlp& critic,
                                         const ParamVector& w, const Mlp& actor,
                                         const ParamVector& theta, const TrainerConfig& cfg) {
    auto make_tail = [&] {
        return [&actor, &theta, ws = actor.make_workspace()](const State& s) mutable {
            const Vec3 x = s.to_vec();
            double a = 0.0;
            actor.forward(theta, x.data(), &a, ws);
            return a;
        };
    };
    return n_step_target_generic(batch, critic, w, make_tail, cfg);
}

// Semi-gradient of the mean squared N-step error: the target is held
// constant, so the per-trajectory term is (Q(s_0,a_0;w) - target) dQ/dw.
// A descent step w -= lr * (this) reduces the critic loss.
inline ParamVector critic_semi_gradient(const TrajectoryBatch& batch,
                                        const std::vector<double>& targets, const Mlp& critic,
                                        const ParamVector& w, int threads = 0) {
    if (targets.size() != static_cast<size_t>(batch.num_traj))
        throw std::invalid_argument("critic_semi_gradient: targets/batch size mismatch");
    const int num_chunks = (batch.num_traj + kDefaultChunk - 1) / kDefaultChunk;
    std::vector<ParamVector> partial(static_cast<size_t>(num_chunks));
    for_chunks(batch.num_traj, kDefaultChunk, threads, [&](int c, int begin, int end) {
        MlpWorkspace cws = critic.make_workspace();
        GradResult gr;
        ParamVector acc(static_cast<size_t>(critic.param_count()), 0.0);
        for (int i = begin; i < end; ++i) {
            const State s0 = batch.state(i, 0);
            const double x[4] = {s0.v_ego, s0.v_front, s0.gap, batch.action(i, 0)};
            double q = 0.0;
            critic.forward(w, x, &q, cws);
            const double upstream = q - targets[i];
            critic.backward(w, x, &upstream, gr, cws);
            for (size_t j = 0; j < acc.size(); ++j) acc[j] += gr.d_params[j];
        }
        partial[c] = std::move(acc);
    });
    ParamVector grad(static_cast<size_t>(critic.param_count()), 0.0);
    for (const auto& acc : partial)
        for (size_t j = 0; j < grad.size(); ++j) grad[j] += acc[j];
    const double inv = 1.0 / batch.num_traj;
    for (double& v : grad) v *= inv;
    return grad;
}

// --- actor gradients through the model --------------------------------------

// Policy backend used by the BPTT sweep. MlpPolicy is the production
// implementation; tests substitute stubs (e.g. a frozen policy whose
// parameter gradient is identically zero).
struct MlpPolicy {
    const Mlp* net = nullptr;
    const ParamVector* theta = nullptr;
    MlpWorkspace ws;
    GradResult grad;

    MlpPolicy(const Mlp& n, const ParamVector& t) : net(&n), theta(&t), ws(n.make_workspace()) {}

    int param_count() const { return net->param_count(); }

    double act(const State& s) {
        const Vec3 x = s.to_vec();
        double a = 0.0;
        net->forward(*theta, x.data(), &a, ws);
        return a;
    }

    // gradient of the scalar action wrt parameters (d_params) and state
    // (d_input); valid until the next call
    const GradResult& act_grad(const State& s) {
        const Vec3 x = s.to_vec();
        const double upstream = 1.0;
        net->backward(*theta, x.data(), &upstream, grad, ws);
        return grad;
    }
};

namespace detail {

inline double dot3(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline Vec3 mat_t_vec(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
    const size_t n = y.size();
    const double* xp = x.data();
    double* yp = y.data();
    for (size_t j = 0; j < n; ++j) yp[j] += a * xp[j];
}

// Reverse (adjoint) accumulation of the replayed-trajectory gradients. The
// stored states are exactly the replay of the stored noises at the current
// parameters, so they are reused directly instead of being recomputed.
//
// lambda_t carries d(J_r)/d(s_t) and mu_t carries d(J_c)/d(s_t); both are
// pushed backwards through A and the policy Jacobian. J_r accumulates the
// discounted rewards plus the gamma^N critic tail through both s_N and
// a_N = pi(s_N); J_c accumulates the undiscounted sigmoid surrogate over
// s_1..s_N with no terminal critic term.
template <class Policy>
void bptt_trajectory(const TrajectoryBatch& batch, int i, Policy& pol, const Mlp& critic,
                     const ParamVector& w, MlpWorkspace& critic_ws, GradResult& critic_grad,
                     const EnvParams& env, const TrainerConfig& cfg,
                     const std::vector<double>& gpow, const Mat3& dfds, const Vec3& dfda,
                     std::vector<double>& g_r, std::vector<double>& g_c) {
    const int horizon = batch.horizon;
    const Vec3 rgrad = reward_state_grad(env.rew);

    const State sN = batch.state(i, horizon);
    const double aN = pol.act(sN);
    const double xN[4] = {sN.v_ego, sN.v_front, sN.gap, aN};
    const double one = 1.0;
    critic.backward(w, xN, &one, critic_grad, critic_ws);
    const Vec3 dq_ds = {critic_grad.d_input[0], critic_grad.d_input[1], critic_grad.d_input[2]};
    const double dq_da = critic_grad.d_input[3];
    const double gN = gpow[horizon];

    const auto& agN = pol.act_grad(sN);
    const double u_rN = gN * dq_da;
    axpy(g_r, u_rN, agN.d_params);

    Vec3 lambda = {gN * dq_ds[0] + u_rN * agN.d_input[0],
                   gN * dq_ds[1] + u_rN * agN.d_input[1],
                   gN * dq_ds[2] + u_rN * agN.d_input[2]};
    Vec3 mu = surrogate_cost_state_grad(sN, cfg.surrogate, env.rew);

    for (int t = horizon - 1; t >= 0; --t) {
        const State st = batch.state(i, t);
        const auto& ag = pol.act_grad(st);
        const double u_r = dot3(lambda, dfda);
        const double u_c = dot3(mu, dfda);
        axpy(g_r, u_r, ag.d_params);
        axpy(g_c, u_c, ag.d_params);

        Vec3 lam_next = mat_t_vec(dfds, lambda);
        Vec3 mu_next = mat_t_vec(dfds, mu);
        for (int j = 0; j < 3; ++j) {
            lam_next[j] += u_r * ag.d_input[j] + gpow[t] * rgrad[j];
            mu_next[j] += u_c * ag.d_input[j];
        }
        if (t >= 1) {
            const Vec3 cg = surrogate_cost_state_grad(st, cfg.surrogate, env.rew);
            for (int j = 0; j < 3; ++j) mu_next[j] += cg[j];
        }
        lambda = lam_next;
        mu = mu_next;
    }
}

}  // namespace detail

// Sample-mean BPTT gradients of the discounted reward objective and of the
// undiscounted surrogate cost over the replayed batch. make_policy() builds
// one policy backend per worker chunk.
template <class MakePolicy>
BpttGrads bptt_grads_generic(const TrajectoryBatch& batch, MakePolicy&& make_policy,
                             const Mlp& critic, const ParamVector& w, const EnvParams& env,
                             const TrainerConfig& cfg) {
    if (batch.num_traj < 1 || batch.horizon < 1)
        throw std::invalid_argument("bptt_grads: empty batch");
    if (batch.noises.size() != static_cast<size_t>(batch.num_traj) * batch.horizon)
        throw std::invalid_argument("bptt_grads: batch is missing its noise replay");

    const auto gpow = discount_powers(cfg.discount, batch.horizon);
    Mat3 dfds;
    Vec3 dfda;
    dynamics_jacobians(env.dyn, dfds, dfda);

    const int num_chunks = (batch.num_traj + kDefaultChunk - 1) / kDefaultChunk;
    std::vector<std::vector<double>> part_r(static_cast<size_t>(num_chunks));
    std::vector<std::vector<double>> part_c(static_cast<size_t>(num_chunks));

    for_chunks(batch.num_traj, kDefaultChunk, cfg.threads, [&](int c, int begin, int end) {
        auto pol = make_policy();
        MlpWorkspace cws = critic.make_workspace();
        GradResult cgrad;
        std::vector<double> g_r(static_cast<size_t>(pol.param_count()), 0.0);
        std::vector<double> g_c(static_cast<size_t>(pol.param_count()), 0.0);
        for (int i = begin; i < end; ++i)
            detail::bptt_trajectory(batch, i, pol, critic, w, cws, cgrad, env, cfg, gpow, dfds,
                                    dfda, g_r, g_c);
        part_r[c] = std::move(g_r);
        part_c[c] = std::move(g_c);
    });

    BpttGrads out;
    out.grad_jr.assign(part_r[0].size(), 0.0);
    out.grad_jc.assign(part_c[0].size(), 0.0);
    for (int c = 0; c < num_chunks; ++c) {
        detail::axpy(out.grad_jr, 1.0, part_r[c]);
        detail::axpy(out.grad_jc, 1.0, part_c[c]);
    }
    const double inv = 1.0 / batch.num_traj;
    for (double& v : out.grad_jr) v *= inv;
    for (double& v : out.grad_jc) v *= inv;
    return out;
}

inline BpttGrads bptt_grads(const TrajectoryBatch& batch, const Mlp& actor,
                            const ParamVector& theta, const Mlp& critic, const ParamVector& w,
                            const EnvParams& env, const TrainerConfig& cfg) {
    return bptt_grads_generic(
        batch, [&] { return MlpPolicy(actor, theta); }, critic, w, env, cfg);
}

// Replayed sample objectives at the given actor parameters: the finite
// difference oracle for bptt_grads differentiates exactly these.
inline std::pair<double, double> replay_objectives(const TrajectoryBatch& batch, const Mlp& actor,
                                                   const ParamVector& theta, const Mlp& critic,
                                                   const ParamVector& w, const EnvParams& env,
                                                   const TrainerConfig& cfg) {
    const auto gpow = discount_powers(cfg.discount, batch.horizon);
    MlpWorkspace aws = actor.make_workspace();
    MlpWorkspace cws = critic.make_workspace();
    double jr = 0.0, jc = 0.0;
    for (int i = 0; i < batch.num_traj; ++i) {
        auto act = [&](const State& s) {
            const Vec3 x = s.to_vec();
            double a = 0.0;
            actor.forward(theta, x.data(), &a, aws);
            return a;
        };
        const auto states = replay_trajectory(batch, i, act, env);
        for (int t = 0; t < batch.horizon; ++t) {
            jr += gpow[t] * reward(states[t], env.rew);
            jc += surrogate_cost(states[t + 1], cfg.surrogate, env.rew);
        }
        const State& sN = states[batch.horizon];
        const double aN = act(sN);
        const double x[4] = {sN.v_ego, sN.v_front, sN.gap, aN};
        double q = 0.0;
        critic.forward(w, x, &q, cws);
        jr += gpow[batch.horizon] * q;
    }
    return {jr / batch.num_traj, jc / batch.num_traj};
}

// --- exterior-point actor update --------------------------------------------

inline ParamVector penalized_direction(const ParamVector& grad_jr, const ParamVector& grad_jc,
                                       double cost_multiplier) {
    if (grad_jr.size() != grad_jc.size())
        throw std::invalid_argument("penalized_direction: gradient size mismatch");
    ParamVector dir(grad_jr.size());
    for (size_t j = 0; j < dir.size(); ++j)
        dir[j] = grad_jr[j] - cost_multiplier * grad_jc[j];
    return dir;
}

inline double l2_norm(const ParamVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct ProxyGradient {
    ParamVector direction;
    double coefficient = 0.0;      // min(b_k (1-delta-p_hat), weight_max); 0 when feasible
    double cost_term_scale = 0.0;  // multiplier actually applied to grad_Jc
};

// Switched ascent direction: equal to grad_Jr whenever the estimated safe
// probability meets the threshold, otherwise grad_Jr minus the adaptively
// weighted surrogate-cost gradient. When normalization is on, the cost term
// is rescaled by |grad_Jr| / |grad_Jc| so the raw penalty factor cannot
// swamp the reward gradient; the switched coefficient is further capped at
// penalty_weight_max.
inline ProxyGradient proxy_gradient(const BpttGrads& g, double p_hat, double b_k,
                                    const TrainerConfig& cfg) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0))
        throw std::invalid_argument("proxy_gradient: p_hat must lie in [0,1]");
    ProxyGradient out;
    if (p_hat >= 1.0 - cfg.risk_level) {
        out.direction = g.grad_jr;
        return out;
    }
    out.coefficient = std::min(b_k * (1.0 - cfg.risk_level - p_hat), cfg.penalty_weight_max);
    double scale = 1.0;
    if (cfg.penalty_normalize)
        scale = l2_norm(g.grad_jr) / std::max(l2_norm(g.grad_jc), 1e-8);
    out.cost_term_scale = out.coefficient * scale;
    out.direction = penalized_direction(g.grad_jr, g.grad_jc, out.cost_term_scale);
    return out;
}

// --- one Algorithm pass ------------------------------------------------------

struct TrainContext {
    enum class Update { kProxy, kFixedWeight };

    const Mlp* actor = nullptr;
    const Mlp* critic = nullptr;
    EnvParams env;
    TrainerConfig cfg;
    Update update = Update::kProxy;
    double fixed_weight = 0.0;  // FWP baseline weight; 0 trains unconstrained
};

namespace detail {

inline void check_finite(const ParamVector& p, int iter, const char* which) {
    for (double v : p)
        if (!std::isfinite(v)) throw TrainingDiverged(iter, std::string(which) + " non-finite");
}

inline void adam_ascent(ParamVector& p, const ParamVector& dir, double lr, ParamVector& m,
                        ParamVector& v, int t, const TrainerConfig& cfg) {
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t + 1), c2 = 1.0 - std::pow(b2, t + 1);
    for (size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * dir[j];
        v[j] = b2 * v[j] + (1.0 - b2) * dir[j] * dir[j];
        p[j] += lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
    }
}

}  // namespace detail

// One full pass: rollout -> safe-probability estimate -> critic semi-gradient
// step -> actor step along the proxy (or fixed-weight) direction -> penalty
// factor advance. Deterministic given (state, context).
inline TrainerState train_iteration(const TrainerState& in, const TrainContext& ctx) {
    const TrainerConfig& cfg = ctx.cfg;
    const Mlp& actor = *ctx.actor;
    const Mlp& critic = *ctx.critic;
    TrainerState out = in;

    const std::uint64_t iter_seed = derive_seed(in.run_seed, static_cast<std::uint64_t>(in.k), 1);
    const TrajectoryBatch batch = rollout_policy_batch(
        actor, in.actor_params, ctx.env, cfg.num_trajectories, cfg.horizon, iter_seed, cfg.threads);

    const SafeProbEstimate ps = estimate_safe_prob(batch);
    const double jc = empirical_jc(batch);

    const auto targets = n_step_target(batch, critic, in.critic_params, actor, in.actor_params, cfg);
    const ParamVector cgrad =
        critic_semi_gradient(batch, targets, critic, in.critic_params, cfg.threads);
    if (cfg.use_adam) {
        ParamVector descent(cgrad.size());
        for (size_t j = 0; j < cgrad.size(); ++j) descent[j] = -cgrad[j];
        detail::adam_ascent(out.critic_params, descent, cfg.critic_lr, out.adam_m_critic,
                            out.adam_v_critic, in.k, cfg);
    } else {
        for (size_t j = 0; j < out.critic_params.size(); ++j)
            out.critic_params[j] -= cfg.critic_lr * cgrad[j];
    }
    detail::check_finite(out.critic_params, in.k, "critic parameters");

    const BpttGrads grads =
        bptt_grads(batch, actor, in.actor_params, critic, out.critic_params, ctx.env, cfg);

    const double b_k = penalty_factor(in.k, cfg);
    ParamVector direction;
    double coef = 0.0;
    if (ctx.update == TrainContext::Update::kFixedWeight) {
        direction = penalized_direction(grads.grad_jr, grads.grad_jc, ctx.fixed_weight);
        coef = ctx.fixed_weight;
    } else {
        ProxyGradient pg = proxy_gradient(grads, ps.p_hat, b_k, cfg);
        direction = std::move(pg.direction);
        coef = pg.cost_term_scale;
    }

    const double alr = cfg.actor_lr(in.k);
    if (cfg.use_adam) {
        detail::adam_ascent(out.actor_params, direction, alr, out.adam_m_actor, out.adam_v_actor,
                            in.k, cfg);
    } else {
        for (size_t j = 0; j < out.actor_params.size(); ++j)
            out.actor_params[j] += alr * direction[j];
    }
    detail::check_finite(out.actor_params, in.k, "actor parameters");

    double ret = 0.0;
    for (double t : targets) ret += t;
    ret /= targets.empty() ? 1.0 : static_cast<double>(targets.size());

    out.k = in.k + 1;
    out.last_metrics = {in.k, ps.p_hat, jc, ret, b_k, coef, alr, cfg.critic_lr};
    return out;
}

// Convergence is declared when both the policy outputs and the critic
// outputs move by at most zeta across one iteration, measured as a max over
// a probe set of states (and actions for the critic) drawn once from a
// dedicated seed.
inline bool convergence_check(const TrainerState& prev, const TrainerState& cur,
                              const TrainContext& ctx, double zeta) {
    if (!(zeta > 0.0)) throw std::invalid_argument("convergence_check: zeta must be > 0");
    const Mlp& actor = *ctx.actor;
    const Mlp& critic = *ctx.critic;
    Rng rng(ctx.cfg.probe_seed);
    MlpWorkspace aws = actor.make_workspace();
    MlpWorkspace cws = critic.make_workspace();
    double dpi = 0.0, dq = 0.0;
    for (int n = 0; n < ctx.cfg.convergence_probes; ++n) {
        const State s = sample_initial_state(rng, ctx.env.init);
        const double a_probe = rng.uniform(ctx.env.dyn.accel_lo, ctx.env.dyn.accel_hi);
        const Vec3 sv = s.to_vec();
        double a0 = 0.0, a1 = 0.0;
        actor.forward(prev.actor_params, sv.data(), &a0, aws);
        actor.forward(cur.actor_params, sv.data(), &a1, aws);
        dpi = std::max(dpi, std::fabs(a1 - a0));
        const double x[4] = {s.v_ego, s.v_front, s.gap, a_probe};
        double q0 = 0.0, q1 = 0.0;
        critic.forward(prev.critic_params, x, &q0, cws);
        critic.forward(cur.critic_params, x, &q1, cws);
        dq = std::max(dq, std::fabs(q1 - q0));
    }
    return dpi <= zeta && dq <= zeta;
}

}  // namespace ccac
