#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/oracles.hpp"
#include "yoeo/envs/point_mass.hpp"
#include "yoeo/envs/registry.hpp"
#include "yoeo/envs/tabular.hpp"
#include "yoeo/errors.hpp"

using namespace yoeo;
using namespace yoeo::envs;

namespace {

Vector scalar(double a) {
    Vector v(1);
    v << a;
    return v;
}

// Exhaustive expectation over every action and outcome branch of an acyclic tabular MDP.
double brute_force_value(const TabularMdp& env, const TabularPolicy& beta, std::size_t s, double gamma, int depth) {
    if (depth == 0) return 0.0;
    double total = 0.0;
    for (const auto& p : beta.support(s)) {
        for (const auto& o : env.outcomes(s, env.bin_of(p.action))) {
            const double cont = o.next_state ? brute_force_value(env, beta, *o.next_state, gamma, depth - 1) : 0.0;
            total += p.probability * o.probability * (o.reward + gamma * cont);
        }
    }
    return total;
}

// Kolmogorov-Smirnov distance between a sample and U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = (xs[i] - lo) / (hi - lo);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

class NullPolicy final : public Policy {
public:
    Vector act(const Vector&, nn::RngStream&) const override { return scalar(0.0); }
};

}  // namespace

TEST_CASE("rollout on a zero-reward environment returns 0") {
    std::vector<std::vector<std::vector<TabularOutcome>>> table = {{{{1.0, 0.0, std::size_t{0}}}}};
    TabularMdp env("zero", 1, {}, table, {1.0}, 30, 0.9);
    NullPolicy null;
    nn::RngStream rng(1, 0);
    const Trajectory traj = rollout(env, null, rng);
    CHECK(traj.length() == 30);
    CHECK(traj.discounted_return == 0.0);
    CHECK(traj.undiscounted_return == 0.0);
    CHECK_FALSE(traj.terminated);
}

TEST_CASE("point mass at the goal under the null policy earns 0") {
    PointMass1D env;
    NullPolicy null;
    nn::RngStream rng(2, 0);
    RolloutOptions ro;
    ro.start_state = Vector::Zero(2);
    const Trajectory traj = rollout(env, null, rng, ro);
    CHECK(traj.length() == env.horizon());
    CHECK(traj.undiscounted_return == 0.0);
}

TEST_CASE("rollout length never exceeds the horizon or max_steps") {
    PointMass1D env;
    auto policy = random_policy(env);
    nn::RngStream rng(3, 0);
    CHECK(rollout(env, *policy, rng).length() == env.horizon());
    RolloutOptions ro;
    ro.max_steps = 7;
    CHECK(rollout(env, *policy, rng, ro).length() == 7);
    auto chain = make_mixture_recovery();
    for (int i = 0; i < 200; ++i) CHECK(rollout(chain, *policy, rng).length() <= chain.horizon());
}

TEST_CASE("point mass thrust stalls above the threshold") {
    PointMass1D env;
    CHECK(env.thrust(0.5) == 0.5);
    CHECK(env.thrust(-0.8) == -0.8);
    CHECK(env.thrust(0.9) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(env.thrust(1.0) == doctest::Approx(-0.8));
    CHECK(env.thrust(-1.0) == doctest::Approx(0.8));
}

TEST_CASE("expert mean return matches the recorded expert score within 2%") {
    auto env = make_env("pointmass1d");
    const auto ref = reference_scores(*env, 1000, 11);
    auto expert = expert_policy(*env);
    nn::RngStream rng(12, 0);
    double total = 0.0;
    for (int i = 0; i < 100; ++i) total += rollout(*env, *expert, rng).undiscounted_return;
    const double mean = total / 100.0;
    CHECK(std::abs(mean - ref.expert_score) <= 0.02 * std::abs(ref.expert_score));
    CHECK(ref.expert_score > ref.random_score);
}

TEST_CASE("random behavior actions are uniform within bounds") {
    auto env = make_env("pointmass1d");
    nn::RngStream rng(21, 0);
    const auto d = generate_dataset(*env, make_behavior(*env, BehaviorTag::random), 100, rng);
    std::vector<double> actions;
    for (std::size_t t = 0; t < d.size(); ++t) {
        const double a = d.actions()(static_cast<Eigen::Index>(t), 0);
        CHECK(a >= -1.0);
        CHECK(a <= 1.0);
        actions.push_back(a);
    }
    // 1% critical value of the one-sample KS statistic.
    CHECK(ks_uniform(actions, -1.0, 1.0) < 1.63 / std::sqrt(static_cast<double>(actions.size())));
}

TEST_CASE("medium-expert mixture draws about half of the episodes from each component") {
    auto env = make_env("pointmass1d");
    nn::RngStream rng(22, 0);
    const std::size_t n = 400;
    const auto d = generate_dataset(*env, make_behavior(*env, BehaviorTag::medium_expert_mix), n, rng);
    const auto& comps = d.metadata().at("episode_components");
    REQUIRE(comps.size() == n);
    std::size_t experts = 0;
    for (const auto& c : comps) experts += c.get<long>() == 1 ? 1 : 0;
    const double sigma = std::sqrt(n * 0.25);
    CHECK(std::abs(static_cast<double>(experts) - n / 2.0) <= 4.0 * sigma);
}

TEST_CASE("medium-replay assigns checkpoints in increasing blocks") {
    auto env = make_env("pointmass1d");
    nn::RngStream rng(23, 0);
    const auto d = generate_dataset(*env, make_behavior(*env, BehaviorTag::medium_replay_mix), 50, rng);
    const auto& comps = d.metadata().at("episode_components");
    for (std::size_t e = 0; e < 50; ++e) CHECK(comps[e].get<long>() == static_cast<long>(e / 10));
}

TEST_CASE("long-horizon generator: 50 episodes of 1000 steps survive a save/load cycle") {
    auto env = make_env("pointmass1d", {{"horizon", 1000}});
    const auto d = generate_benchmark_dataset(*env, BehaviorTag::medium, 50, 5);
    const auto path = std::filesystem::temp_directory_path() / "yoeo_long_horizon.yoed";
    data::save_dataset(d, path.string());
    const auto loaded = data::load_dataset(path.string());
    std::filesystem::remove(path);
    CHECK(loaded.size() == 50'000);
    CHECK(loaded.episode_count() == 50);
    for (std::size_t e = 0; e < 50; ++e) CHECK(loaded.episode_starts()[e] == e * 1000);
    CHECK(loaded.metadata().at("env_params").at("horizon").get<std::size_t>() == 1000);
}

TEST_CASE("generator is reproducible byte for byte") {
    for (const auto& name : {"pointmass1d", "mixture_recovery"}) {
        auto env = make_env(name);
        const auto a = data::serialize_dataset(generate_benchmark_dataset(*env, BehaviorTag::medium, 20, 99));
        const auto b = data::serialize_dataset(generate_benchmark_dataset(*env, BehaviorTag::medium, 20, 99));
        const auto c = data::serialize_dataset(generate_benchmark_dataset(*env, BehaviorTag::medium, 20, 100));
        CHECK(a == b);
        CHECK(a != c);
    }
}

TEST_CASE("metadata rebuilds the generating environment") {
    auto env = make_env("pointmass1d", {{"stall", 0.7}, {"gamma", 0.95}});
    const auto d = generate_benchmark_dataset(*env, BehaviorTag::random, 2, 1);
    auto rebuilt = env_from_metadata(d.metadata());
    const auto* pm = dynamic_cast<const PointMass1D*>(rebuilt.get());
    REQUIRE(pm != nullptr);
    CHECK(pm->params().stall == 0.7);
    CHECK(pm->gamma() == 0.95);
    CHECK(d.metadata().at("gamma").get<double>() == 0.95);
}

TEST_CASE("registry rejects unknown names and parameters") {
    CHECK_THROWS_AS(make_env("hopper"), ConfigError);
    CHECK_THROWS_AS(make_env("pointmass1d", {{"gravity", 9.8}}), ConfigError);
    CHECK_THROWS_AS(behavior_from_string("mediocre"), ConfigError);
    auto chain = make_env("bandit_chain");
    CHECK_THROWS_AS(make_behavior(*chain, BehaviorTag::medium_replay_mix), ConfigError);
}

TEST_CASE("behavior spec weights must sum to one") {
    PointMass1D env;
    BehaviorPolicySpec spec;
    spec.components = {{"a", random_policy(env), 0.5}, {"b", random_policy(env), 0.4}};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.components[1].weight = 0.5;
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("solve_dp with gamma = 0 gives Q equal to the expected reward") {
    auto env = make_mixture_recovery();
    const auto sol = solve_dp(env, env.behavior("behavior"), 0.0);
    for (std::size_t s = 0; s < env.num_states(); ++s) {
        CHECK(sol.q_bin[s][0] == doctest::Approx(0.2));
        CHECK(sol.q_bin[s][1] == doctest::Approx(0.9));
        CHECK(sol.q_bin[s][2] == doctest::Approx(-1.0));
    }
}

TEST_CASE("two-state absorbing chain has value 1/(1-0.9) at the recurrent state") {
    auto env = make_two_state_absorbing();
    const auto sol = solve_dp(env, env.behavior("behavior"));
    CHECK(sol.residual < 1e-10);
    CHECK(sol.value[1] == doctest::Approx(10.0).epsilon(1e-10));
    CHECK(sol.value[0] == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("solve_dp matches exhaustive expectation on every acyclic tabular env") {
    for (const auto& env : {make_deterministic_chain(), make_bandit_chain(), make_mixture_recovery(),
                            make_bernoulli_one_step()}) {
        const auto& beta = env.behavior("behavior");
        const auto sol = solve_dp(env, beta);
        CHECK(sol.residual < 1e-10);
        for (std::size_t s = 0; s < env.num_states(); ++s) {
            const double v = brute_force_value(env, beta, s, env.gamma(), static_cast<int>(env.num_states()) + 1);
            CHECK(sol.value[static_cast<Eigen::Index>(s)] == doctest::Approx(v).epsilon(1e-12));
        }
    }
}

TEST_CASE("mixture recovery: closed-form backward recursion and beta*") {
    auto env = make_mixture_recovery();
    const auto sol = solve_dp(env, env.behavior("behavior"));
    const double g = env.gamma();
    double v_next = 0.0;
    for (std::size_t k = env.num_states(); k-- > 0;) {
        CHECK(sol.q_bin[k][1] == doctest::Approx(0.9 + g * v_next).epsilon(1e-12));
        CHECK(sol.q_bin[k][0] == doctest::Approx(0.2 + g * v_next).epsilon(1e-12));
        CHECK(sol.q_bin[k][2] == doctest::Approx(-1.0).epsilon(1e-12));
        v_next = 0.55 + g * v_next;
        CHECK(sol.value[static_cast<Eigen::Index>(k)] == doctest::Approx(v_next).epsilon(1e-12));
        // beta* is the expert action while the mean behavior action falls in the slow bin.
        CHECK(sol.greedy_action[k] == -0.2);
        CHECK(env.bin_of(0.5 * (-0.2 - 0.95)) == 0);
    }
}

TEST_CASE("mixture recovery DP table matches the shipped fixture") {
    std::ifstream in(std::string(YOEO_FIXTURE_DIR) + "/mixture_recovery_dp.json");
    REQUIRE(in.good());
    const auto fixture = nlohmann::json::parse(in);
    auto env = make_mixture_recovery();
    const auto& beta = env.behavior("behavior");
    const auto fresh = dp_solution_to_json(env, beta, solve_dp(env, beta));
    REQUIRE(fixture.at("states").size() == fresh.at("states").size());
    for (std::size_t s = 0; s < env.num_states(); ++s) {
        const auto& a = fixture["states"][s];
        const auto& b = fresh["states"][s];
        CHECK(a["v"].get<double>() == doctest::Approx(b["v"].get<double>()).epsilon(1e-12));
        CHECK(a["greedy_action"].get<double>() == b["greedy_action"].get<double>());
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(a["q_bins"][k].get<double>() == doctest::Approx(b["q_bins"][k].get<double>()).epsilon(1e-12));
        }
    }
}

TEST_CASE("solve_dp rejects non-tabular environments") {
    PointMass1D env;
    CHECK_THROWS_AS(solve_dp(env, TabularPolicy::uniform_support(1, {{0.0, 1.0}})), UsageError);
}

TEST_CASE("Monte Carlo on a deterministic env has zero spread") {
    auto env = make_deterministic_chain();
    nn::RngStream rng(31, 0);
    const auto st = monte_carlo_value(env, env.behavior("expert"), env.one_hot(0), std::nullopt, 100, rng);
    CHECK(st.std == 0.0);
    CHECK(st.mean == doctest::Approx(1 + 0.99 + 0.99 * 0.99 + std::pow(0.99, 3) + std::pow(0.99, 4)));
}

TEST_CASE("Monte Carlo on Bernoulli(0.5)*10 recovers mean and quantiles") {
    auto env = make_bernoulli_one_step();
    nn::RngStream rng(32, 0);
    const std::size_t n = 100'000;
    const auto st = monte_carlo_value(env, env.behavior("behavior"), env.one_hot(0), std::nullopt, n, rng);
    const double se = 5.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(st.mean - 5.0) <= 3.0 * se);
    CHECK(st.q90 == 10.0);
    CHECK(st.q10 == 0.0);
}

TEST_CASE("Monte Carlo with a forced first action evaluates Q") {
    auto env = make_mixture_recovery();
    const auto& beta = env.behavior("behavior");
    const auto sol = solve_dp(env, beta);
    nn::RngStream rng(33, 0);
    const auto st = monte_carlo_value(env, beta, env.one_hot(2), scalar(0.7), 1000, rng);
    CHECK(st.mean == doctest::Approx(sol.q(env, 2, 0.7)));
    CHECK(st.std == 0.0);
}

TEST_CASE("DP and Monte Carlo agree within 3 standard errors on every tabular env") {
    nn::RngStream rng(34, 0);
    for (const auto& name : {"det_chain", "bernoulli_one_step", "bandit_chain", "mixture_recovery", "two_state_absorbing"}) {
        auto env_ptr = make_env(name);
        const auto& env = dynamic_cast<const TabularMdp&>(*env_ptr);
        const auto& beta = env.behavior("behavior");
        const auto sol = solve_dp(env, beta);
        for (std::size_t s = 0; s < env.num_states(); ++s) {
            const auto st = monte_carlo_value(env, beta, env.one_hot(s), std::nullopt, 20'000, rng);
            const double tol = std::max(3.0 * st.standard_error, 1e-9);
            CHECK_MESSAGE(std::abs(st.mean - sol.value[static_cast<Eigen::Index>(s)]) <= tol, name << " state " << s);
        }
    }
}

TEST_CASE("trajectory log-probability: stepwise product equals accumulated sum") {
    auto env = make_bandit_chain();
    const auto& beta = env.behavior("behavior");
    nn::RngStream rng(41, 0);
    for (int i = 0; i < 50; ++i) {
        const Trajectory traj = rollout(env, beta, rng);
        double product = env.initial_distribution()[env.state_index(traj.states[0])];
        for (std::size_t t = 0; t < traj.length(); ++t) {
            const std::size_t s = env.state_index(traj.states[t]);
            const double a = traj.actions[t][0];
            product *= beta.probability(s, a);
            for (const auto& o : env.outcomes(s, env.bin_of(a))) {
                if (o.reward == traj.rewards[t]) product *= o.probability;
            }
        }
        CHECK(std::abs(std::log(product) - trajectory_log_probability(env, beta, traj)) < 1e-12);
    }
}

TEST_CASE("normalized score") {
    CHECK(normalized_score(-10.0, -10.0, 30.0) == 0.0);
    CHECK(normalized_score(30.0, -10.0, 30.0) == 100.0);
    CHECK(normalized_score(10.0, -10.0, 30.0) == 50.0);
    CHECK_THROWS_AS(normalized_score(1.0, 2.0, 2.0), UsageError);
    CHECK(normalized_score(5.0, nlohmann::json{{"random_score", 0.0}, {"expert_score", 10.0}}) == 50.0);
    CHECK_THROWS_AS(normalized_score(5.0, nlohmann::json::object()), UsageError);
}

TEST_CASE("reward scaling scales DP values and survives the metadata round trip") {
    const auto base = make_env("mixture_recovery");
    const auto scaled = make_env("mixture_recovery", {{"reward_scale", 10.0}});
    const auto& b = dynamic_cast<const TabularMdp&>(*base);
    const auto& s = dynamic_cast<const TabularMdp&>(*scaled);
    const auto dp_b = solve_dp(b, b.behavior("behavior"));
    const auto dp_s = solve_dp(s, s.behavior("behavior"));
    for (Eigen::Index i = 0; i < dp_b.value.size(); ++i) CHECK(dp_s.value[i] == doctest::Approx(10.0 * dp_b.value[i]));
    CHECK(dp_s.greedy_action == dp_b.greedy_action);

    const auto params = env_params(s);
    CHECK(params.at("reward_scale").get<double>() == 10.0);
    CHECK_FALSE(env_params(b).contains("reward_scale"));
    const auto dataset = generate_benchmark_dataset(s, BehaviorTag::medium, 5, 1);
    const auto rebuilt = env_from_metadata(dataset.metadata());
    CHECK(dynamic_cast<const TabularMdp&>(*rebuilt).reward_scale() == 10.0);
    CHECK_THROWS_AS(make_env("det_chain", {{"reward_scale", 0.0}}), ConfigError);
    CHECK_THROWS_AS(make_env("pointmass1d", {{"reward_scale", 2.0}}), ConfigError);
}
