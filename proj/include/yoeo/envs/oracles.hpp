#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "yoeo/envs/environment.hpp"

namespace yoeo::envs {

struct MonteCarloStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;           // sample standard deviation
    double standard_error = 0.0;
    double q10 = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
    std::vector<double> sorted_returns;  // kept only when requested

    /// Inverse empirical CDF: smallest return r with F(r) >= tau. Needs sorted_returns.
    double quantile(double tau) const;
};

struct MonteCarloOptions {
    std::optional<std::size_t> max_steps;  // default: env.horizon()
    std::optional<double> gamma;           // default: env.gamma()
    bool keep_samples = false;
};

/// Discounted-return statistics of `policy` from `state` (optionally forcing the first action).
MonteCarloStats monte_carlo_value(const Environment& env, const Policy& policy, const Vector& state,
                                  const std::optional<Vector>& action, std::size_t n_rollouts, nn::RngStream& rng,
                                  const MonteCarloOptions& options = {});

/// Summary statistics of an arbitrary sample (used for return sets gathered elsewhere).
MonteCarloStats summarize_returns(std::vector<double> returns, bool keep_samples = false);

/// 100 * (J - J_random) / (J_expert - J_random).
double normalized_score(double score, double random_score, double expert_score);
/// Same, reading "random_score" and "expert_score" from dataset metadata.
double normalized_score(double score, const nlohmann::json& metadata);

/// Empirical inverse CDF of a sorted sample.
double empirical_quantile(const std::vector<double>& sorted, double tau);

}  // namespace yoeo::envs
