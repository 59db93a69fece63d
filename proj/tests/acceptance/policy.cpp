#include <algorithm>
#include <cmath>
#include <memory>

#include "acceptance.hpp"
#include "yoeo/diagnostics/diagnostics.hpp"
#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/envs/tabular.hpp"
#include "yoeo/pipeline/pipeline.hpp"

namespace yoeo::acceptance {

namespace {

using nn::Matrix;
using nn::Vector;

struct TrainedRun {
    data::TransitionDataset dataset;
    value::ValueEnsemble values;
    std::shared_ptr<const pipeline::PolicyStage> stage;
};

TrainedRun train(const envs::Environment& env, const config::RunConfig& c, envs::BehaviorTag tag, std::size_t episodes) {
    TrainedRun run;
    run.dataset = envs::generate_benchmark_dataset(env, tag, episodes, c.seed);
    std::optional<value::ValueCache> cache;
    if (c.variant != critic::Variant::no_reg) {
        run.values = pipeline::train_value_stage(c, run.dataset);
        cache = pipeline::make_value_cache(c, run.dataset, run.values);
    }
    run.stage = std::make_shared<const pipeline::PolicyStage>(
        pipeline::train_policy_stage(c, run.dataset, cache ? &*cache : nullptr, env.bounds()));
    return run;
}

struct Conditions {
    std::size_t pairs = 0;
    double fidelity = 0.0;   // share of held-out pairs within 10% of range
    double pessimism = 0.0;  // share of held-out states whose sweep stays under Y_min(s; 0.9) + 0.5
    double range = 0.0;
};

// `oracle` returns Q^beta(s, a) for one held-out pair.
Conditions check_conditions(const TrainedRun& run, const data::TransitionDataset& held, std::size_t stride,
                            const envs::ActionBounds& bounds, const std::function<double(const Vector&, const Vector&)>& oracle,
                            std::optional<double> range) {
    nn::RngStream rng(77, 0);
    std::vector<double> truth, predicted;
    std::size_t pessimistic = 0;
    for (std::size_t i = 0; i < held.size(); i += stride) {
        const auto r = static_cast<Eigen::Index>(i);
        const Matrix s = held.states().middleRows(r, 1);
        truth.push_back(oracle(s.row(0).transpose(), held.actions().row(r).transpose()));
        predicted.push_back(run.stage->critics.ensemble_min(s, held.actions().middleRows(r, 1))[0]);
        Matrix sweep(100, static_cast<Eigen::Index>(bounds.dim()));
        for (Eigen::Index j = 0; j < sweep.rows(); ++j) sweep.row(j) = bounds.sample_uniform(rng).transpose();
        const double peak = run.stage->critics.ensemble_min(s.replicate(100, 1), sweep).maxCoeff();
        const double upper = run.values.quantile(s, 0.9, value::Aggregate::min)[0];
        pessimistic += peak <= upper + 0.5;
    }
    Conditions out;
    out.pairs = truth.size();
    out.range = range ? *range
                      : *std::max_element(truth.begin(), truth.end()) - *std::min_element(truth.begin(), truth.end());
    std::size_t close = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) close += std::abs(predicted[k] - truth[k]) <= 0.1 * out.range;
    out.fidelity = static_cast<double>(close) / static_cast<double>(out.pairs);
    out.pessimism = static_cast<double>(pessimistic) / static_cast<double>(out.pairs);
    return out;
}

Conditions tabular_conditions(const std::string& name, std::size_t steps, std::uint64_t seed) {
    const auto env_ptr = envs::make_env(name, {{"reward_scale", 10.0}});
    const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
    auto c = desk_config(env, seed);
    c.value_steps = c.critic_steps = steps;
    const auto run = train(env, c, envs::BehaviorTag::medium, 300);
    const auto held = envs::generate_benchmark_dataset(env, envs::BehaviorTag::medium, 100, seed + 1000);
    const auto dp = envs::solve_dp(env, env.behavior("behavior"));
    auto oracle = [&](const Vector& s, const Vector& a) { return dp.q(env, env.state_index(s), a[0]); };
    return check_conditions(run, held, 1, env.bounds(), oracle, dp.value_range());
}

Conditions pointmass_conditions(std::uint64_t seed) {
    const auto env = envs::make_env("pointmass1d");
    const auto c = desk_config(*env, seed);
    const auto run = train(*env, c, envs::BehaviorTag::medium, 200);
    const auto held = envs::generate_benchmark_dataset(*env, envs::BehaviorTag::medium, 20, seed + 1000);
    const auto beta = envs::make_behavior(*env, envs::BehaviorTag::medium).step_mixture();
    nn::RngStream rng(seed, 0x900);
    auto oracle = [&](const Vector& s, const Vector& a) {
        return envs::monte_carlo_value(*env, *beta, s, a, 100, rng).mean;
    };
    return check_conditions(run, held, 5, env->bounds(), oracle, std::nullopt);
}

}  // namespace

Outcome theorem_conditions() {
    struct Case {
        const char* label;
        Conditions result;
    };
    std::vector<Case> cases;
    cases.push_back({"det_chain", tabular_conditions("det_chain", 5000, 1)});
    cases.push_back({"mixture_recovery", tabular_conditions("mixture_recovery", 10'000, 1)});
    cases.push_back({"pointmass1d medium", pointmass_conditions(1)});
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        pass = pass && c.result.fidelity >= 0.9 && c.result.pessimism >= 0.95;
        detail += format("%s%s: fidelity %.3f, pessimism %.3f over %zu pairs (range %.2f)", detail.empty() ? "" : "; ",
                         c.label, c.result.fidelity, c.result.pessimism, c.result.pairs, c.result.range);
    }
    return {pass, detail};
}

Outcome behavior_greedy_recovery() {
    const auto env_ptr = envs::make_env("mixture_recovery", {{"reward_scale", 10.0}});
    const auto& env = dynamic_cast<const envs::TabularMdp&>(*env_ptr);
    auto c = desk_config(env, 1);
    c.value_steps = c.critic_steps = 10'000;
    const auto run = train(env, c, envs::BehaviorTag::medium, 300);
    const auto dp = envs::solve_dp(env, env.behavior("behavior"));

    const policy::KnnActionIndex index = policy::KnnActionIndex::from_dataset(run.dataset, c.knn_k);
    std::vector<std::optional<bool>> per_state(env.num_states());
    std::size_t matches = 0;
    for (Eigen::Index r = 0; r < run.dataset.states().rows(); ++r) {
        const Vector s = run.dataset.states().row(r).transpose();
        const std::size_t k = env.state_index(s);
        if (!per_state[k]) {
            const double chosen = policy::knn_policy(index, run.stage->critics, s)[0];
            per_state[k] = env.bin_of(chosen) == env.bin_of(dp.greedy_action[k]);
        }
        matches += per_state[k].value() ? 1 : 0;
    }
    const double share = static_cast<double>(matches) / static_cast<double>(run.dataset.size());

    const auto& meta = run.dataset.metadata();
    const double random_score = meta.at("random_score").get<double>();
    const double expert_score = meta.at("expert_score").get<double>();
    const auto knn = pipeline::make_run_policy("knn", run.stage, run.dataset, c.knn_k);
    const double score = pipeline::evaluate_policy(env, *knn, 100, c.seed, random_score, expert_score).normalized_mean;
    const double behavior = envs::normalized_score(meta.at("behavior_score").get<double>(), random_score, expert_score);
    const bool pass = share >= 0.95 && score >= behavior + 20.0;
    return {pass, format("knn action matches beta* on %.3f of dataset states; score %.1f vs behavior %.1f", share, score,
                         behavior)};
}

Outcome calibration_contrast() {
    const auto env = envs::make_env("pointmass1d");
    auto full_config = desk_config(*env, 1);
    auto plain_config = full_config;
    plain_config.variant = critic::Variant::no_reg;
    const auto full = train(*env, full_config, envs::BehaviorTag::medium, 200);
    const auto plain = train(*env, plain_config, envs::BehaviorTag::medium, 200);
    const auto beta = envs::make_behavior(*env, envs::BehaviorTag::medium).step_mixture();

    diagnostics::CalibrationOptions options;
    options.seed = 1;
    const auto report = diagnostics::calibration_report({{"full", &full.stage->critics}, {"no_reg", &plain.stage->critics}},
                                                        full.dataset, *env, *beta, options);
    const double ratio = report.discrimination_std(0) / report.discrimination_std(1);
    const double rmse_full = report.rmse(0);
    const double rmse_plain = report.rmse(1);
    const bool within = rmse_plain <= 2.0 * rmse_full && rmse_full <= 2.0 * rmse_plain;
    return {ratio >= 2.0 && within,
            format("discrimination std full %.3f / no_reg %.3f = %.2f; on-policy RMSE full %.3f, no_reg %.3f over %zu pairs",
                   report.discrimination_std(0), report.discrimination_std(1), ratio, rmse_full, rmse_plain,
                   report.pair_index.size())};
}

}  // namespace yoeo::acceptance
