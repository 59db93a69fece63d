#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "yoeo/data/dataset.hpp"
#include "yoeo/envs/environment.hpp"

namespace yoeo::envs {

enum class BehaviorTag { random, medium, medium_replay_mix, medium_expert_mix, expert };

std::string to_string(BehaviorTag tag);
BehaviorTag behavior_from_string(const std::string& text);

/// How mixture components are assigned.
enum class Mixing {
    per_episode,  // each episode draws one component by weight
    per_step,     // each step draws a component by weight
    sequential,   // episodes are split into consecutive blocks proportional to the weights
};

struct BehaviorComponent {
    std::string name;
    std::shared_ptr<const Policy> policy;
    double weight = 1.0;
};

struct BehaviorPolicySpec {
    BehaviorTag tag = BehaviorTag::random;
    std::vector<BehaviorComponent> components;
    Mixing mixing = Mixing::per_episode;

    /// Throws ConfigError unless there is at least one component and the weights sum to 1.
    void validate() const;
    /// The step-level mixture as a single policy (per-episode mixtures are not Markov in general).
    std::shared_ptr<const Policy> step_mixture() const;
};

/// Rolls out `episodes` episodes and records them with bookkeeping metadata: env, behavior tag,
/// gamma, horizon, component names and the component index used by every episode.
data::TransitionDataset generate_dataset(const Environment& env, const BehaviorPolicySpec& spec, std::size_t episodes,
                                         nn::RngStream& rng, nlohmann::json metadata = nlohmann::json::object());

}  // namespace yoeo::envs
