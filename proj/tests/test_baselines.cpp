#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ccac/baselines.hpp"

using namespace ccac;

namespace {

const NoiseSumDist& default_noise_sum() {
    static NoiseSumDist dist{TruncNormSpec{}};
    return dist;
}

double std_normal_quantile(double p) {
    double lo = -10.0, hi = 10.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (std_normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("fwp gradient is the unswitched penalty") {
    BpttGrads g;
    g.grad_jr = {1.0, -2.0, 0.5};
    g.grad_jc = {0.25, 0.25, 0.25};

    SECTION("weight 0 is the unconstrained direction") {
        REQUIRE(fwp_gradient(g, FwpConfig{0.0}) == g.grad_jr);
    }
    SECTION("weight 20 with grad_jc == grad_jr gives -19 grad_jr") {
        g.grad_jc = g.grad_jr;
        const ParamVector d = fwp_gradient(g, FwpConfig{20.0});
        for (size_t j = 0; j < d.size(); ++j)
            REQUIRE(d[j] == Catch::Approx(-19.0 * g.grad_jr[j]).margin(1e-12));
    }
    SECTION("equals the proxy penalty branch with switching and schedule forced") {
        // force b_k (1 - delta - p_hat) == weight with normalization off
        const double weight = 7.5, p_hat = 0.4;
        TrainerConfig cfg;
        cfg.risk_level = 0.1;
        cfg.penalty_normalize = false;
        cfg.penalty_weight_max = 1e9;
        const double b_k = weight / (1.0 - cfg.risk_level - p_hat);
        const ProxyGradient pg = proxy_gradient(g, p_hat, b_k, cfg);
        REQUIRE(pg.direction == fwp_gradient(g, FwpConfig{weight}));
    }
    SECTION("negative weight is rejected") {
        REQUIRE_THROWS_AS(fwp_gradient(g, FwpConfig{-1.0}), std::invalid_argument);
    }
}

TEST_CASE("mfpd iteration") {
    EnvParams env;
    Mlp mean_net(make_mlp_spec(3, {4, 4}, 1));
    Mlp rcritic(make_mlp_spec(4, {4, 4}, 1));
    Mlp ccritic(make_mlp_spec(4, {4, 4}, 1));
    MfpdContext ctx;
    ctx.mean_net = &mean_net;
    ctx.reward_critic = &rcritic;
    ctx.cost_critic = &ccritic;
    ctx.env = env;
    ctx.cfg.num_trajectories = 16;
    ctx.cfg.horizon = 5;
    ctx.cfg.threads = 1;

    auto fresh = [&](std::uint64_t seed) {
        MfpdState st;
        st.run_seed = seed;
        st.mean_params = mean_net.init_params(derive_seed(seed, 0, 300));
        st.log_std = std::log(ctx.cfg.sigma_init);
        st.reward_critic_params = rcritic.init_params(derive_seed(seed, 0, 301));
        st.cost_critic_params = ccritic.init_params(derive_seed(seed, 0, 302));
        return st;
    };

    SECTION("deterministic given the seed") {
        MfpdState a = fresh(21), b = fresh(21);
        for (int k = 0; k < 2; ++k) {
            a = mfpd_iteration(a, ctx);
            b = mfpd_iteration(b, ctx);
        }
        REQUIRE(a.mean_params == b.mean_params);
        REQUIRE(a.lambda == b.lambda);
        REQUIRE(a.log_std == b.log_std);
    }
    SECTION("safe rollouts keep the dual variable at zero") {
        ctx.env.init = {5, 5, 6, 6, 40, 40};  // cannot violate within 5 steps
        MfpdState st = fresh(22);
        st = mfpd_iteration(st, ctx);
        REQUIRE(st.last_metrics.jc == 0.0);
        REQUIRE(st.lambda == 0.0);  // max(0, 0 + lr (0 - delta)) projects to 0
    }
    SECTION("violations push the dual variable up") {
        ctx.env.init = {7, 7, 5, 5, 2.05, 2.05};  // almost touching, going fast
        MfpdState st = fresh(23);
        st = mfpd_iteration(st, ctx);
        REQUIRE(st.last_metrics.jc > ctx.cfg.risk_level);
        REQUIRE(st.lambda ==
                Catch::Approx(ctx.cfg.dual_lr * (st.last_metrics.jc - ctx.cfg.risk_level))
                    .margin(1e-12));
    }
    SECTION("exploration std stays positive") {
        MfpdState st = fresh(24);
        for (int k = 0; k < 3; ++k) st = mfpd_iteration(st, ctx);
        REQUIRE(std::exp(st.log_std) >= ctx.cfg.std_min);
        REQUIRE(std::exp(st.log_std) <= ctx.cfg.std_max);
    }
}

TEST_CASE("dual update arithmetic") {
    // lambda' = max(0, lambda + lr (jc - delta)): stationary at jc == delta,
    // nonnegative, moves in the direction of the constraint violation
    MfpdConfig cfg;
    auto dual = [&](double lambda, double jc) {
        return std::max(0.0, lambda + cfg.dual_lr * (jc - cfg.risk_level));
    };
    REQUIRE(dual(0.37, cfg.risk_level) == 0.37);
    REQUIRE(dual(0.0, 0.0) == 0.0);
    REQUIRE(dual(0.2, 0.5) > 0.2);
    REQUIRE(dual(0.2, 0.0) < 0.2);
    for (double l : {0.0, 0.001, 0.5})
        for (double jc : {0.0, 0.05, 0.1, 0.3, 5.0}) REQUIRE(dual(l, jc) >= 0.0);
}

TEST_CASE("noise-sum distribution table") {
    const NoiseSumDist& dist = default_noise_sum();

    SECTION("matches the analytic normal sum away from the truncation") {
        // truncation at +-5 sigma shifts these quantiles by far less than the
        // 1e-3 grid tolerance
        for (double p : {0.00125, 0.01, 0.1, 0.5, 0.9, 0.99875}) {
            const double analytic = std::sqrt(2.0) * std_normal_quantile(p);
            REQUIRE(dist.quantile(p) == Catch::Approx(analytic).margin(1e-3));
        }
    }
    SECTION("cdf and quantile are inverse") {
        for (double p : {0.001, 0.2, 0.5, 0.77, 0.999})
            REQUIRE(dist.cdf(dist.quantile(p)) == Catch::Approx(p).margin(1e-6));
    }
    SECTION("agrees with a Monte-Carlo quantile") {
        Rng rng(808);
        TruncNormSpec spec;
        const int n = 1'000'000;
        std::vector<double> z(n);
        for (double& v : z)
            v = sample_trunc_normal(rng, spec) + sample_trunc_normal(rng, spec);
        const double p = 0.99875;
        const size_t idx = static_cast<size_t>(p * n);
        std::nth_element(z.begin(), z.begin() + idx, z.end());
        // 4 standard errors of the empirical quantile at this n
        REQUIRE(dist.quantile(p) == Catch::Approx(z[idx]).margin(0.05));
    }
}

TEST_CASE("shield projection") {
    const NoiseSumDist& dist = default_noise_sum();
    DynamicsParams dyn;
    const double gap_min = 2.0;
    ShieldConfig cfg;  // risk 0.1 over 80 steps

    SECTION("inactive constraint returns the raw action") {
        const State s = {5, 6, 50};
        REQUIRE(shield_project(s, 2.5, cfg, dyn, gap_min, dist) == 2.5);
    }
    SECTION("binding case matches a bisection + Monte-Carlo oracle") {
        const State s = {6, 6, 2.45};
        const double a_proj = shield_project(s, 3.0, cfg, dyn, gap_min, dist);
        REQUIRE(a_proj > -4.0);
        REQUIRE(a_proj < 3.0);

        // oracle: bisect the action with the two-step violation probability
        // estimated on one large fixed noise-pair sample
        Rng rng(909);
        const int n = 4'000'000;
        std::vector<double> z(n);
        for (double& v : z)
            v = sample_trunc_normal(rng, dyn.noise) + sample_trunc_normal(rng, dyn.noise);
        std::sort(z.begin(), z.end());
        auto violation = [&](double a) {
            const double mean_gap = s.gap + 2 * dyn.dt * (s.v_front - s.v_ego) - dyn.dt * dyn.dt * a;
            const double z_req = (gap_min - mean_gap) / dyn.dt;
            return static_cast<double>(std::upper_bound(z.begin(), z.end(), z_req) - z.begin()) / n;
        };
        const double per_step = cfg.risk_level / cfg.horizon;
        double lo = dyn.accel_lo, hi = dyn.accel_hi;
        while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            (violation(mid) <= per_step ? lo : hi) = mid;
        }
        REQUIRE(a_proj == Catch::Approx(lo).margin(0.25));
    }
    SECTION("infeasible case falls back to maximal braking") {
        const State s = {10, 6, 2.05};
        REQUIRE(shield_project(s, 1.0, cfg, dyn, gap_min, dist) == -4.0);
    }
    SECTION("idempotent and always within bounds") {
        Rng rng(117);
        for (int trial = 0; trial < 500; ++trial) {
            const State s = {rng.uniform(0, 12), rng.uniform(4, 8), rng.uniform(1.5, 12)};
            const double a_raw = rng.uniform(-4, 3);
            const double a1 = shield_project(s, a_raw, cfg, dyn, gap_min, dist);
            REQUIRE(a1 >= -4.0);
            REQUIRE(a1 <= 3.0);
            REQUIRE(shield_project(s, a1, cfg, dyn, gap_min, dist) == a1);
        }
    }
    SECTION("online solver route agrees with the closed form") {
        Rng rng(118);
        for (int trial = 0; trial < 25; ++trial) {
            const State s = {rng.uniform(0, 12), rng.uniform(4, 8), rng.uniform(1.8, 8)};
            const double a_raw = rng.uniform(-4, 3);
            const double fast = shield_project(s, a_raw, cfg, dyn, gap_min, dist);
            const double solved = shield_project_solve(s, a_raw, cfg, dyn, gap_min);
            REQUIRE(solved == Catch::Approx(fast).margin(0.01));
        }
    }
    SECTION("config validation") {
        REQUIRE_THROWS_AS((ShieldConfig{0.0, 80}).validate(), std::invalid_argument);
        REQUIRE_THROWS_AS((ShieldConfig{0.1, 0}).validate(), std::invalid_argument);
    }
}
