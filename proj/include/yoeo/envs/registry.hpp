#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "yoeo/envs/behavior.hpp"
#include "yoeo/envs/environment.hpp"

namespace yoeo::envs {

/// Names accepted by make_env.
std::vector<std::string> env_names();

/// Builds an environment by name. `params` overrides individual parameters
/// (pointmass1d: goal, dt, accel, damping, stall, start_center, start_jitter, horizon, gamma;
/// tabular envs: gamma, and horizon for two_state_absorbing). Unknown keys are rejected.
std::unique_ptr<Environment> make_env(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

/// Parameters that reproduce `env` through make_env.
nlohmann::json env_params(const Environment& env);

/// Behavior mixtures for each regime. Options (pointmass1d): "medium_noise", "medium_saturation".
BehaviorPolicySpec make_behavior(const Environment& env, BehaviorTag tag,
                                 const nlohmann::json& options = nlohmann::json::object());

std::shared_ptr<const Policy> expert_policy(const Environment& env);
std::shared_ptr<const Policy> random_policy(const Environment& env);

struct ReferenceScores {
    double random_score = 0.0;
    double expert_score = 0.0;
};

/// Mean undiscounted return of the random and expert policies over `episodes` rollouts.
ReferenceScores reference_scores(const Environment& env, std::size_t episodes, std::uint64_t seed);

/// generate_dataset plus reference scores, env parameters and the seed in the metadata.
data::TransitionDataset generate_benchmark_dataset(const Environment& env, BehaviorTag tag, std::size_t episodes,
                                                   std::uint64_t seed,
                                                   const nlohmann::json& options = nlohmann::json::object());

/// Rebuilds the environment a dataset was generated from.
std::unique_ptr<Environment> env_from_metadata(const nlohmann::json& metadata);

}  // namespace yoeo::envs
