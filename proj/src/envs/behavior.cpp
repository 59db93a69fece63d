#include "yoeo/envs/behavior.hpp"

#include <cmath>

#include "yoeo/errors.hpp"

namespace yoeo::envs {

namespace {

constexpr std::pair<BehaviorTag, const char*> kTagNames[] = {
    {BehaviorTag::random, "random"},
    {BehaviorTag::medium, "medium"},
    {BehaviorTag::medium_replay_mix, "medium_replay"},
    {BehaviorTag::medium_expert_mix, "medium_expert"},
    {BehaviorTag::expert, "expert"},
};

const char* mixing_name(Mixing m) {
    switch (m) {
        case Mixing::per_episode: return "per_episode";
        case Mixing::per_step: return "per_step";
        case Mixing::sequential: return "sequential";
    }
    return "?";
}

class StepMixture final : public Policy {
public:
    explicit StepMixture(std::vector<BehaviorComponent> components) : components_(std::move(components)) {}
    Vector act(const Vector& state, nn::RngStream& rng) const override {
        double u = rng.uniform();
        for (const auto& c : components_) {
            if (u < c.weight) return c.policy->act(state, rng);
            u -= c.weight;
        }
        return components_.back().policy->act(state, rng);
    }

private:
    std::vector<BehaviorComponent> components_;
};

std::size_t draw_component(const std::vector<BehaviorComponent>& components, nn::RngStream& rng) {
    double u = rng.uniform();
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (u < components[i].weight) return i;
        u -= components[i].weight;
    }
    return components.size() - 1;
}

}  // namespace

std::string to_string(BehaviorTag tag) {
    for (const auto& [t, name] : kTagNames) {
        if (t == tag) return name;
    }
    return "?";
}

BehaviorTag behavior_from_string(const std::string& text) {
    for (const auto& [t, name] : kTagNames) {
        if (text == name) return t;
    }
    if (text == "medium_replay_mix") return BehaviorTag::medium_replay_mix;
    if (text == "medium_expert_mix") return BehaviorTag::medium_expert_mix;
    throw ConfigError("unknown behavior '" + text + "' (expected random, medium, medium_replay, medium_expert, expert)");
}

void BehaviorPolicySpec::validate() const {
    if (components.empty()) throw ConfigError("behavior spec has no components");
    double total = 0.0;
    for (const auto& c : components) {
        if (!c.policy) throw ConfigError("behavior component '" + c.name + "' has no policy");
        if (!(c.weight >= 0.0)) throw ConfigError("behavior component '" + c.name + "' has a negative weight");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("behavior mixture weights sum to " + std::to_string(total));
}

std::shared_ptr<const Policy> BehaviorPolicySpec::step_mixture() const {
    validate();
    if (components.size() == 1) return components.front().policy;
    return std::make_shared<StepMixture>(components);
}

data::TransitionDataset generate_dataset(const Environment& env, const BehaviorPolicySpec& spec, std::size_t episodes,
                                         nn::RngStream& rng, nlohmann::json metadata) {
    if (episodes == 0) throw UsageError("generate_dataset needs at least one episode");
    spec.validate();

    std::vector<std::size_t> assignment(episodes, 0);
    if (spec.mixing == Mixing::sequential) {
        double cumulative = 0.0;
        std::size_t begin = 0;
        for (std::size_t c = 0; c < spec.components.size(); ++c) {
            cumulative += spec.components[c].weight;
            const auto end = c + 1 == spec.components.size()
                                 ? episodes
                                 : static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(episodes)));
            for (std::size_t e = begin; e < end && e < episodes; ++e) assignment[e] = c;
            begin = end;
        }
    }

    const auto mixture = spec.step_mixture();
    data::DatasetBuilder builder(env.state_dim(), env.action_dim());
    nlohmann::json episode_components = nlohmann::json::array();
    std::vector<double> episode_returns;
    for (std::size_t e = 0; e < episodes; ++e) {
        const Policy* policy = mixture.get();
        long component = -1;
        if (spec.mixing == Mixing::per_episode) assignment[e] = draw_component(spec.components, rng);
        if (spec.mixing != Mixing::per_step || spec.components.size() == 1) {
            component = static_cast<long>(assignment[e]);
            policy = spec.components[assignment[e]].policy.get();
        }
        const Trajectory traj = rollout(env, *policy, rng);
        builder.begin_episode();
        for (std::size_t t = 0; t < traj.length(); ++t) {
            data::EndKind end = data::EndKind::none;
            if (t + 1 == traj.length()) end = traj.terminated ? data::EndKind::terminal : data::EndKind::timeout;
            builder.add(traj.states[t], traj.actions[t], traj.rewards[t], traj.next_states[t], end);
        }
        episode_components.push_back(component);
        episode_returns.push_back(traj.undiscounted_return);
    }

    nlohmann::json names = nlohmann::json::array();
    for (const auto& c : spec.components) names.push_back(c.name);
    metadata["env"] = env.name();
    metadata["behavior"] = to_string(spec.tag);
    metadata["gamma"] = env.gamma();
    metadata["horizon"] = env.horizon();
    metadata["episodes"] = episodes;
    metadata["mixing"] = mixing_name(spec.mixing);
    metadata["components"] = names;
    metadata["episode_components"] = episode_components;
    double mean_return = 0.0;
    for (double r : episode_returns) mean_return += r;
    metadata["behavior_score"] = mean_return / static_cast<double>(episodes);
    return builder.build(std::move(metadata));
}

}  // namespace yoeo::envs
