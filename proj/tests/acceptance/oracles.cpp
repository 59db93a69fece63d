#include <algorithm>
#include <cmath>

#include "acceptance.hpp"
#include "yoeo/critic/critic.hpp"
#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/envs/tabular.hpp"
#include "yoeo/pipeline/pipeline.hpp"

namespace yoeo::acceptance {

namespace {

using nn::Matrix;
using nn::Vector;

const std::vector<std::string> kTabularEnvs = {"det_chain", "bernoulli_one_step", "bandit_chain", "mixture_recovery",
                                               "two_state_absorbing"};

Matrix state_row(const envs::TabularMdp& env, std::size_t s) { return env.one_hot(s).transpose(); }

}  // namespace

Outcome dp_mc_cross_check() {
    constexpr std::size_t kRollouts = 1'000'000;
    nn::RngStream rng(2, 0);
    bool pass = true;
    double worst_z = 0.0;
    std::size_t states = 0;
    std::string failures;
    for (const auto& name : kTabularEnvs) {
        const auto env_ptr = envs::make_env(name);
        const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
        const auto& beta = env.behavior("behavior");
        const auto dp = envs::solve_dp(env, beta);
        for (std::size_t s = 0; s < env.num_states(); ++s) {
            const auto mc = envs::monte_carlo_value(env, beta, env.one_hot(s), std::nullopt, kRollouts, rng);
            const double gap = std::abs(mc.mean - dp.value[static_cast<Eigen::Index>(s)]);
            const double z = mc.standard_error > 0.0 ? gap / mc.standard_error : (gap <= 1e-9 ? 0.0 : INFINITY);
            worst_z = std::max(worst_z, z);
            ++states;
            if (z > 3.0) {
                pass = false;
                failures += format(" %s/s%zu z=%.2f", name.c_str(), s, z);
            }
        }
    }
    return {pass, format("%zu states, %zu rollouts each, worst |MC - DP| = %.2f standard errors%s", states, kRollouts,
                         worst_z, failures.c_str())};
}

Outcome value_convergence() {
    bool pass = true;
    std::string detail;

    {
        const auto env_ptr = envs::make_env("det_chain");
        const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
        const auto dataset = envs::generate_benchmark_dataset(env, envs::BehaviorTag::medium, 1000, 3);
        const auto dp = envs::solve_dp(env, env.behavior("behavior"));
        auto c = desk_config(env, 3);
        c.value_steps = 20'000;
        const auto values = pipeline::train_value_stage(c, dataset);
        const double tol = 0.01 * dp.value_range();
        double worst = 0.0;
        for (std::size_t s = 0; s < env.num_states(); ++s) {
            const double mean = values.expected(state_row(env, s), 64, value::Aggregate::mean)[0];
            worst = std::max(worst, std::abs(mean - dp.value[static_cast<Eigen::Index>(s)]));
        }
        pass = pass && worst < tol;
        detail += format("chain: worst |E[Y] - V| %.4f vs tol %.4f after %zu steps", worst, tol, c.value_steps);
    }
    {
        const auto env_ptr = envs::make_env("bernoulli_one_step");
        const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
        const auto dataset = envs::generate_benchmark_dataset(env, envs::BehaviorTag::medium, 2000, 4);
        auto c = desk_config(env, 4);
        c.value_steps = 10'000;
        const auto values = pipeline::train_value_stage(c, dataset);
        nn::RngStream rng(4, 1);
        const auto start = env.one_hot(0);
        envs::MonteCarloOptions keep;
        keep.keep_samples = true;
        const auto mc = envs::monte_carlo_value(env, env.behavior("behavior"), start, std::nullopt, 100'000, rng, keep);
        const double range = mc.sorted_returns.back() - mc.sorted_returns.front();
        const double tol = 0.1 * range;
        const double exact90 = mc.quantile(0.9);
        const double exact10 = mc.quantile(0.1);
        const double y90 = values.quantile(state_row(env, 0), 0.9, value::Aggregate::mean)[0];
        const double y10 = values.quantile(state_row(env, 0), 0.1, value::Aggregate::mean)[0];
        const bool ok = std::abs(y90 - exact90) <= tol && std::abs(y10 - exact10) <= tol;
        pass = pass && ok;
        detail += format("; bernoulli: Y(0.9) %.3f vs %.3f, Y(0.1) %.3f vs %.3f, tol %.3f", y90, exact90, y10, exact10, tol);
    }
    return {pass, detail};
}

Outcome sarsa_target_convergence() {
    const auto env_ptr = envs::make_env("det_chain", {{"reward_scale", 10.0}});
    const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
    const auto dataset = envs::generate_benchmark_dataset(env, envs::BehaviorTag::medium, 2000, 9);
    const auto dp = envs::solve_dp(env, env.behavior("behavior"));
    const auto& beta = env.behavior("behavior");

    // Worst |Q - Q_DP| over the actions the behavior policy takes.
    auto worst_error = [&](critic::Variant variant) {
        auto c = desk_config(env, 9);
        c.variant = variant;
        c.critic_members = 1;
        c.critic_steps = 12'000;
        std::optional<value::ValueCache> cache;
        value::ValueEnsemble values;
        if (variant != critic::Variant::no_reg) {
            values = pipeline::train_value_stage(c, dataset);
            cache = pipeline::make_value_cache(c, dataset, values);
        }
        const auto stage = pipeline::train_policy_stage(c, dataset, cache ? &*cache : nullptr, env.bounds());
        double worst = 0.0;
        for (std::size_t s = 0; s < env.num_states(); ++s) {
            for (const auto& point : beta.support(s)) {
                Matrix a(1, 1);
                a << point.action;
                const double q = stage.critics.ensemble_min(state_row(env, s), a)[0];
                worst = std::max(worst, std::abs(q - dp.q(env, s, point.action)));
            }
        }
        return worst;
    };
    const double tol = 0.01 * dp.value_range();
    const double with_regularizer = worst_error(critic::Variant::sarsa_target);
    const double plain = worst_error(critic::Variant::no_reg);
    return {with_regularizer <= tol,
            format("worst on-policy |Q - Q_DP| %.4f vs tol %.4f (1%% of range %.2f); same schedule without the regularizer: %.4f",
                   with_regularizer, tol, dp.value_range(), plain)};
}

}  // namespace yoeo::acceptance
