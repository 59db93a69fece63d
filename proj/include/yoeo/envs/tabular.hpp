#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "yoeo/envs/environment.hpp"

namespace yoeo::envs {

/// One stochastic consequence of taking an action bin in a state.
struct TabularOutcome {
    double probability = 1.0;
    double reward = 0.0;
    std::optional<std::size_t> next_state;  // nullopt: episode terminates
};

/// Finite-support behavior policy over continuous actions, one support list per state.
struct SupportPoint {
    double action = 0.0;
    double probability = 1.0;
};

class TabularMdp;

class TabularPolicy final : public Policy {
public:
    TabularPolicy() = default;
    explicit TabularPolicy(std::vector<std::vector<SupportPoint>> support);

    /// Same support list in every state.
    static TabularPolicy uniform_support(std::size_t num_states, std::vector<SupportPoint> points);

    Vector act(const Vector& state, nn::RngStream& rng) const override;
    double sample_action(std::size_t state, nn::RngStream& rng) const;

    /// Probability mass placed exactly on `action` in `state`.
    double probability(std::size_t state, double action) const;

    const std::vector<SupportPoint>& support(std::size_t state) const { return support_.at(state); }
    std::size_t num_states() const noexcept { return support_.size(); }

private:
    std::vector<std::vector<SupportPoint>> support_;
};

/// One-hot-state MDP with a scalar continuous action thresholded into bins.
class TabularMdp final : public Environment {
public:
    TabularMdp(std::string name, std::size_t num_states, std::vector<double> thresholds,
               std::vector<std::vector<std::vector<TabularOutcome>>> outcomes, std::vector<double> initial,
               std::size_t horizon, double gamma);

    std::string name() const override { return name_; }
    std::size_t state_dim() const override { return num_states_; }
    const ActionBounds& bounds() const override { return bounds_; }
    std::size_t horizon() const override { return horizon_; }
    double gamma() const override { return gamma_; }

    Vector reset(nn::RngStream& rng) const override;
    StepOutcome step(const Vector& state, const Vector& action, nn::RngStream& rng) const override;

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_bins() const noexcept { return thresholds_.size() + 1; }
    std::size_t bin_of(double action) const;
    const std::vector<TabularOutcome>& outcomes(std::size_t state, std::size_t bin) const;
    const std::vector<double>& initial_distribution() const noexcept { return initial_; }

    Vector one_hot(std::size_t state) const;
    /// Inverse of one_hot; throws ConfigError for anything else.
    std::size_t state_index(const Vector& state) const;

    std::size_t sample_initial(nn::RngStream& rng) const;
    const TabularOutcome& sample_outcome(std::size_t state, std::size_t bin, nn::RngStream& rng) const;

    /// Named behavior policies shipped with the environment (e.g. "expert", "bad", "behavior").
    void add_behavior(const std::string& name, TabularPolicy policy);
    const TabularPolicy& behavior(const std::string& name) const;
    bool has_behavior(const std::string& name) const { return behaviors_.count(name) != 0; }

    /// Multiplies every reward by `factor` (> 0); composes with earlier scalings.
    void scale_rewards(double factor);
    double reward_scale() const noexcept { return reward_scale_; }

private:
    std::string name_;
    std::size_t num_states_;
    std::vector<double> thresholds_;
    std::vector<std::vector<std::vector<TabularOutcome>>> outcomes_;
    std::vector<double> initial_;
    std::size_t horizon_;
    double gamma_;
    ActionBounds bounds_;
    std::map<std::string, TabularPolicy> behaviors_;
    double reward_scale_ = 1.0;
};

struct DpSolution {
    Vector value;                                // V^beta per state
    std::vector<std::vector<double>> q_support;  // Q^beta(s, a) for each support point of beta(s)
    std::vector<std::vector<double>> q_bin;      // Q^beta(s, a) for every action bin
    std::vector<double> greedy_action;           // beta*(s)
    double residual = 0.0;
    std::size_t iterations = 0;

    /// Q^beta(s, a) for an arbitrary action, through its bin.
    double q(const TabularMdp& env, std::size_t state, double action) const;
    /// max V - min V over states.
    double value_range() const;
};

/// Policy evaluation of beta on a tabular env, iterated until the Bellman residual is below `tolerance`.
/// Throws UsageError for non-tabular environments.
DpSolution solve_dp(const Environment& env, const TabularPolicy& beta, std::optional<double> gamma = std::nullopt,
                    double tolerance = 1e-12, std::size_t max_iterations = 1'000'000);

/// V, Q per bin, Q per support point and beta* as JSON (the shipped DP fixtures use this layout).
nlohmann::json dp_solution_to_json(const TabularMdp& env, const TabularPolicy& beta, const DpSolution& solution);

/// Greedy policy that plays beta*(s) deterministically.
TabularPolicy greedy_policy(const DpSolution& solution);

/// Log-probability of the action/transition sequence of a trajectory, accumulated step by step.
double trajectory_log_probability(const TabularMdp& env, const TabularPolicy& beta, const Trajectory& trajectory);

// Factories for the tabular roster.
TabularMdp make_deterministic_chain(std::size_t num_states = 5, double gamma = 0.99);
TabularMdp make_bernoulli_one_step(double gamma = 0.99);
TabularMdp make_bandit_chain(std::size_t num_states = 5, double gamma = 0.99);
TabularMdp make_mixture_recovery(std::size_t num_states = 6, double gamma = 0.99);
TabularMdp make_two_state_absorbing(double gamma = 0.9, std::size_t horizon = 400);

}  // namespace yoeo::envs
